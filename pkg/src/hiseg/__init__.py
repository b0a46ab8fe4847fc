"""Hierarchical segmentation of grouped sequential data.

Subpackages cover the degree-of-sharing model taxonomy (:mod:`hiseg.dos`),
the 3-level corpus model and its file formats (:mod:`hiseg.corpus`), forward
samplers with ground truth (:mod:`hiseg.generative`), collapsed topic
machinery (:mod:`hiseg.topics`), blocked Gibbs inference
(:mod:`hiseg.inference`), and segmentation metrics (:mod:`hiseg.metrics`).
"""

from .corpus import (
    GoldSegmentation,
    GroupedCorpus,
    LatentState,
    Transcript,
    load_corpus,
    load_gold,
    make_corpus,
    save_corpus,
    save_gold,
    segments_from_state,
    validate_state,
)
from .dos import (
    Dimensionality,
    DoSClassification,
    ShareMode,
    format_dos,
    known_models,
    lookup_known_model,
    parse_dos,
    to_generative_config,
)
from .generative import (
    GenerativeConfig,
    Mode,
    SyntheticCorpus,
    crp_partition_log_prob,
    discretize_sizes,
    generate,
    sample_dpmm,
    sample_finite_lda,
    sample_ndp_mask,
    sample_news,
    sample_sticky_hmm,
)
from .inference import (
    InferenceParams,
    InferenceResult,
    baseline_markov,
    initialize,
    joint_log_likelihood,
    run,
    segment_log_likelihood,
)
from .metrics import (
    AlignmentThresholds,
    Segmentation,
    SegmentationReport,
    align,
    evaluate_segmentation,
    pk,
    precision_recall,
    s_measure,
)
from .topics import (
    CountTables,
    TopicMatrix,
    crp_topic_weights,
    estimate_phi,
    init_topics,
    load_topics,
    predictive_word_prob,
    save_topics,
)

__version__ = "0.1.0"
