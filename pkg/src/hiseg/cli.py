"""Command-line interface: generate, learn-topics, infer, evaluate, dos, pipeline.

Every subcommand takes ``--seed`` and ``--format {text,json}``, resolves all
of its parameters up front, and writes a ``manifest.json`` next to its
outputs recording the resolved parameters; ``--from-manifest`` re-runs a
subcommand from such a record and reproduces the outputs byte for byte.
Errors leave a single JSON line on stderr (exit 2 for missing inputs, 1 for
anything else).  The only environment variable consulted is
``HISEG_CONFIG_DIR``, an optional search directory for pipeline configs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .corpus import (
    GoldSegmentation,
    load_corpus,
    load_gold,
    save_corpus,
    save_gold,
    save_state,
)
from .dos import format_dos, known_models, lookup_known_model, parse_dos
from .errors import ConfigError, HisegError
from .generative import GenerativeConfig, Mode, generate
from .inference import InferenceParams, baseline_markov, run
from .metrics import AlignmentThresholds, Segmentation, evaluate_segmentation, precision_recall, s_measure
from .topics import init_topics, load_topics, save_topics

_FORMATS = ("text", "json")


def _json_dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write_json_atomic(path: Path, payload) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(_json_dumps(payload), encoding="utf-8")
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, subcommand: str, params: dict,
                    inputs: list[str], outputs: list[str], started: float) -> None:
    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "params": params,
        "seed": params.get("seed"),
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "duration_s": round(time.time() - started, 6),
    }
    _write_json_atomic(out_dir / "manifest.json", manifest)


def _load_manifest_params(path: str, expected_subcommand: str) -> dict:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("subcommand") != expected_subcommand:
        raise ConfigError(
            f"manifest records subcommand {record.get('subcommand')!r}, "
            f"expected {expected_subcommand!r}"
        )
    return record["params"]


def _parse_int_or_range(text: str) -> int | tuple[int, int]:
    if ":" in text:
        low, high = text.split(":", 1)
        return (int(low), int(high))
    return int(text)


def _parse_gamma(text: str) -> float | tuple[float, ...]:
    if "," in text:
        return tuple(float(v) for v in text.split(","))
    return float(text)


def _size_spec(value) -> int | tuple[int, int]:
    # manifests round-trip ranges as 2-element lists
    if isinstance(value, list):
        return (int(value[0]), int(value[1]))
    return int(value)


def _gamma_spec(value) -> float | tuple[float, ...]:
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    return float(value)


# ---------------------------------------------------------------------------
# generate


def _generate_params_from_args(args) -> dict:
    return {
        "mode": args.mode,
        "k": args.k,
        "vocab": args.vocab,
        "num_topics": args.num_topics,
        "alpha": args.alpha,
        "beta": args.beta,
        "gamma": _parse_gamma(args.gamma),
        "rho": args.rho,
        "transcripts": args.transcripts,
        "sentences": _parse_int_or_range(args.sentences),
        "tokens_per_sentence": _parse_int_or_range(args.tokens_per_sentence),
        "truncation": args.truncation,
        "seed": args.seed,
    }


def _cmd_generate(args) -> int:
    started = time.time()
    if args.from_manifest:
        params = _load_manifest_params(args.from_manifest, "generate")
    else:
        params = _generate_params_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = GenerativeConfig(
        mode=Mode(params["mode"]),
        vocab_size=int(params["vocab"]),
        num_categories=int(params["k"]),
        num_topics=params.get("num_topics"),
        alpha=float(params["alpha"]),
        beta=float(params["beta"]),
        gamma=_gamma_spec(params["gamma"]),
        rho=float(params["rho"]),
        num_transcripts=int(params["transcripts"]),
        sentences_per_transcript=_size_spec(params["sentences"]),
        tokens_per_sentence=_size_spec(params["tokens_per_sentence"]),
        truncation=int(params["truncation"]),
        seed=int(params["seed"]),
    )
    sample = generate(config)
    corpus_path = out_dir / "corpus.jsonl"
    gold_path = out_dir / "gold.jsonl"
    topics_path = out_dir / "truth-topics.topics"
    state_path = out_dir / "truth-state.jsonl"
    save_corpus(sample.corpus, corpus_path)
    save_gold(sample.gold, gold_path)
    save_topics(sample.topics, topics_path)
    save_state(sample.truth, sample.corpus, state_path)
    outputs = [str(p) for p in (corpus_path, gold_path, topics_path, state_path)]
    _write_manifest(out_dir, "generate", params, [], outputs, started)
    summary = {
        "transcripts": sample.corpus.num_transcripts,
        "tokens": sample.corpus.num_tokens,
        "topics_used": int(np.sum(sample.topics.usage > 0)),
        "out": str(out_dir),
    }
    if args.format == "json":
        sys.stdout.write(_json_dumps(summary))
    else:
        print(f"wrote {summary['transcripts']} transcripts, {summary['tokens']} tokens, "
              f"{summary['topics_used']} used topics to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# learn-topics


def _cmd_learn_topics(args) -> int:
    started = time.time()
    if args.from_manifest:
        params = _load_manifest_params(args.from_manifest, "learn-topics")
    else:
        params = {
            "corpus": args.corpus,
            "segments": args.segments,
            "uniform_chunk": args.uniform_chunk,
            "alpha": args.alpha,
            "beta": args.beta,
            "iters": args.iters,
            "seed": args.seed,
        }
    corpus = load_corpus(params["corpus"])
    if params.get("segments"):
        gold = load_gold(params["segments"])
        changepoints = [list(cps) for cps in gold.level1]
    elif params.get("uniform_chunk"):
        chunk = int(params["uniform_chunk"])
        changepoints = [
            list(range(chunk, t.num_tokens, chunk)) for t in corpus.transcripts
        ]
    else:
        raise ConfigError("learn-topics needs --segments or --uniform-chunk")
    matrix = init_topics(
        corpus, changepoints,
        alpha=float(params["alpha"]), beta=float(params["beta"]),
        iters=int(params["iters"]), seed=int(params["seed"]),
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_topics(matrix, out_path)
    _write_manifest(out_path.parent, "learn-topics", params,
                    [params["corpus"]], [str(out_path)], started)
    payload = {"topics": matrix.num_topics, "out": str(out_path)}
    if args.format == "json":
        sys.stdout.write(_json_dumps(payload))
    else:
        print(f"learnt {matrix.num_topics} topics -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# infer


def _cmd_infer(args) -> int:
    started = time.time()
    if args.from_manifest:
        params = _load_manifest_params(args.from_manifest, "infer")
    else:
        params = {
            "corpus": args.corpus,
            "topics": args.topics,
            "k": args.k,
            "alpha": args.alpha,
            "beta": args.beta,
            "gamma": _parse_gamma(args.gamma),
            "rho": args.rho,
            "iters": args.iters,
            "burn_in": args.burn_in,
            "candidate_window": args.candidate_window,
            "epsilon": args.epsilon,
            "stop_on_convergence": args.stop_on_convergence,
            "seed": args.seed,
        }
    corpus = load_corpus(params["corpus"])
    topics = load_topics(params["topics"]) if params.get("topics") else None
    inference_params = InferenceParams(
        num_categories=int(params["k"]),
        alpha=float(params["alpha"]),
        beta=float(params["beta"]),
        gamma=_gamma_spec(params["gamma"]),
        rho=float(params["rho"]),
        iterations=int(params["iters"]),
        burn_in=int(params["burn_in"]),
        candidate_window=params.get("candidate_window"),
        epsilon=float(params["epsilon"]),
        stop_on_convergence=bool(params["stop_on_convergence"]),
        seed=int(params["seed"]),
    )
    result = run(corpus, topics, inference_params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    state_path = out_dir / "state.jsonl"
    trace_path = out_dir / "trace.jsonl"
    seg_path = out_dir / "segmentation.jsonl"
    topics_path = out_dir / "topics.topics"
    save_state(result.state, corpus, state_path)
    with open(trace_path, "w", encoding="utf-8") as handle:
        for entry in result.trace:
            handle.write(json.dumps({
                "iter": entry.iteration,
                "joint_ll": entry.joint_log_likelihood,
                "changepoints": [list(c) for c in entry.changepoints],
            }, sort_keys=True) + "\n")
    save_gold(result.predicted_segmentation(corpus), seg_path)
    save_topics(result.phi, topics_path)
    outputs = [str(p) for p in (state_path, trace_path, seg_path, topics_path)]
    inputs = [params["corpus"]] + ([params["topics"]] if params.get("topics") else [])
    _write_manifest(out_dir, "infer", params, inputs, outputs, started)
    payload = {
        "iterations": len(result.trace),
        "kept": result.kept,
        "final_joint_ll": result.trace[-1].joint_log_likelihood if result.trace else None,
        "out": str(out_dir),
    }
    if args.format == "json":
        sys.stdout.write(_json_dumps(payload))
    else:
        print(f"ran {payload['iterations']} sweeps (kept {payload['kept']}), "
              f"final joint log-likelihood {payload['final_joint_ll']}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _report_text(report) -> str:
    columns = ("PR1", "RC1", "S1", "PR2", "RC2", "S2")
    lines = ["id    " + "  ".join(f"{c:>6}" for c in columns)]
    for scores in report.per_transcript:
        row = scores.as_dict()
        lines.append(f"{row['id']:<5} " + "  ".join(f"{row[c]:6.3f}" for c in columns))
    means = report.as_dict()["mean"]
    lines.append("mean  " + "  ".join(f"{means[c]:6.3f}" for c in columns))
    return "\n".join(lines) + "\n"


def _cmd_evaluate(args) -> int:
    started = time.time()
    if args.from_manifest:
        params = _load_manifest_params(args.from_manifest, "evaluate")
    else:
        level1, level2 = (int(v) for v in args.thresholds.split(","))
        params = {
            "corpus": args.corpus,
            "gold": args.gold,
            "pred": args.pred,
            "thresholds": [level1, level2],
            "seed": args.seed,
        }
    corpus = load_corpus(params["corpus"])
    gold = load_gold(params["gold"])
    predicted = load_gold(params["pred"])
    thresholds = AlignmentThresholds(*params["thresholds"])
    report = evaluate_segmentation(corpus, gold, predicted, thresholds)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        _write_json_atomic(out_path, report.as_dict())
        _write_manifest(out_path.parent, "evaluate", params,
                        [params["corpus"], params["gold"], params["pred"]],
                        [str(out_path)], started)
    if args.format == "json":
        sys.stdout.write(_json_dumps(report.as_dict()))
    else:
        sys.stdout.write(_report_text(report))
    return 0


# ---------------------------------------------------------------------------
# dos


def _cmd_dos(args) -> int:
    if args.dos_command == "parse":
        classification = parse_dos(args.string)
        payload = {
            "canonical": format_dos(classification),
            "levels": classification.levels,
            "phi": [m.value for m in classification.phi_modes],
            "theta": [
                {
                    "share": [m.value for m in spec.share_modes],
                    "dimensionality": spec.dimensionality.value,
                    "sequential": spec.sequential,
                }
                for spec in classification.theta_specs
            ],
            "model": lookup_known_model(classification),
        }
        if args.format == "json":
            sys.stdout.write(_json_dumps(payload))
        else:
            print(f"canonical: {payload['canonical']}")
            print(f"levels: {payload['levels']}")
            for level, spec in enumerate(payload["theta"], start=1):
                flags = spec["dimensionality"] + ("-S" if spec["sequential"] else "")
                print(f"  theta^{level}: share={'-'.join(spec['share']) or '(none)'} {flags}")
            print(f"model: {payload['model'] or 'unknown'}")
    elif args.dos_command == "classify":
        name = lookup_known_model(parse_dos(args.string))
        if args.format == "json":
            sys.stdout.write(_json_dumps({"model": name}))
        else:
            print(name or "unknown")
    elif args.dos_command == "table":
        table = known_models()
        if args.format == "json":
            sys.stdout.write(_json_dumps(table))
        else:
            width = max(len(name) for name in table.values())
            for text, name in table.items():
                print(f"{name:<{width}}  {text}")
    return 0


# ---------------------------------------------------------------------------
# pipeline


def _resolve_config_path(path: str) -> Path:
    candidate = Path(path)
    if candidate.exists():
        return candidate
    config_dir = os.environ.get("HISEG_CONFIG_DIR")
    if config_dir:
        fallback = Path(config_dir) / path
        if fallback.exists():
            return fallback
    raise FileNotFoundError(path)

_PIPELINE_DEFAULTS = {
    "mode": "news",
    "k": 3,
    "vocab": 120,
    "alpha": 1.0,
    "beta": 0.01,
    "gamma": 5.0,
    "rho": 0.95,
    "transcripts": 5,
    "sentences": 30,
    "tokens_per_sentence": 16,
    "truncation": 200,
    "topic_alpha": 1.0,
    "topic_beta": 0.1,
    "topic_iters": 40,
    "iters": 40,
    "burn_in": 20,
    "candidate_window": None,
    "thresholds": [10, 50],
    "seed": 0,
    "corpus": None,
    "gold": None,
}


def _cmd_pipeline(args) -> int:
    started = time.time()
    if args.from_manifest:
        params = _load_manifest_params(args.from_manifest, "pipeline")
    else:
        config_path = _resolve_config_path(args.config)
        loaded = json.loads(config_path.read_text(encoding="utf-8"))
        unknown = set(loaded) - set(_PIPELINE_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        params = {**_PIPELINE_DEFAULTS, **loaded}
        if args.seed is not None:
            params["seed"] = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(params["seed"])

    if params.get("corpus"):
        corpus = load_corpus(params["corpus"])
        gold = load_gold(params["gold"])
        inputs = [params["corpus"], params["gold"]]
        corpus_path, gold_path = Path(params["corpus"]), Path(params["gold"])
    else:
        config = GenerativeConfig(
            mode=Mode(params["mode"]),
            vocab_size=int(params["vocab"]),
            num_categories=int(params["k"]),
            alpha=float(params["alpha"]),
            beta=float(params["beta"]),
            gamma=_gamma_spec(params["gamma"]),
            rho=float(params["rho"]),
            num_transcripts=int(params["transcripts"]),
            sentences_per_transcript=_size_spec(params["sentences"]),
            tokens_per_sentence=_size_spec(params["tokens_per_sentence"]),
            truncation=int(params["truncation"]),
            seed=seed,
        )
        sample = generate(config)
        corpus, gold = sample.corpus, sample.gold
        corpus_path = out_dir / "corpus.jsonl"
        gold_path = out_dir / "gold.jsonl"
        save_corpus(corpus, corpus_path)
        save_gold(gold, gold_path)
        inputs = []

    topics = init_topics(
        corpus, [list(cps) for cps in gold.level1],
        alpha=float(params["topic_alpha"]), beta=float(params["topic_beta"]),
        iters=int(params["topic_iters"]), seed=seed,
    )
    topics_path = out_dir / "topics.topics"
    save_topics(topics, topics_path)

    inference_params = InferenceParams(
        num_categories=int(params["k"]),
        alpha=float(params["alpha"]),
        beta=float(params["beta"]),
        gamma=_gamma_spec(params["gamma"]),
        rho=float(params["rho"]),
        iterations=int(params["iters"]),
        burn_in=int(params["burn_in"]),
        candidate_window=params.get("candidate_window"),
        seed=seed,
    )
    result = run(corpus, topics, inference_params)
    seg_path = out_dir / "segmentation.jsonl"
    state_path = out_dir / "state.jsonl"
    predicted = result.predicted_segmentation(corpus)
    save_gold(predicted, seg_path)
    save_state(result.state, corpus, state_path)

    baseline_cps = baseline_markov(corpus, topics, inference_params)

    thresholds = AlignmentThresholds(*(int(v) for v in params["thresholds"]))
    report = evaluate_segmentation(corpus, gold, predicted, thresholds)
    baseline_scores = _score_level1(corpus, gold, baseline_cps, thresholds.level1)
    payload = report.as_dict()
    payload["baseline_level1"] = baseline_scores
    report_path = out_dir / "report.json"
    _write_json_atomic(report_path, payload)

    outputs = [str(p) for p in (corpus_path, gold_path, topics_path, seg_path,
                                state_path, report_path)]
    _write_manifest(out_dir, "pipeline", params, inputs, outputs, started)
    if args.format == "json":
        sys.stdout.write(_json_dumps(payload))
    else:
        sys.stdout.write(_report_text(report))
        print(f"baseline level-1: S1={baseline_scores['S1']:.3f} "
              f"PR1={baseline_scores['PR1']:.3f} RC1={baseline_scores['RC1']:.3f}")
    return 0


def _score_level1(corpus, gold: GoldSegmentation, predicted_cps, threshold: int) -> dict:
    s1_values, pr_values, rc_values = [], [], []
    for g, transcript in enumerate(corpus.transcripts):
        n = transcript.num_tokens
        reference = Segmentation(n, tuple(gold.level1[g]))
        hypothesis = Segmentation(n, tuple(predicted_cps[g]))
        s1_values.append(s_measure(reference, hypothesis))
        pr, rc = precision_recall(reference.segments(), hypothesis.segments(), threshold)
        pr_values.append(pr)
        rc_values.append(rc)
    return {
        "S1": float(np.mean(s1_values)),
        "PR1": float(np.mean(pr_values)),
        "RC1": float(np.mean(rc_values)),
    }


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--format", choices=_FORMATS, default="text",
                        help="output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiseg",
        description="hierarchical segmentation toolkit: synthetic corpora, "
                    "topic learning, blocked Gibbs inference, and metrics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("generate", help="sample a synthetic corpus")
    gen.add_argument("--mode", choices=[m.value for m in Mode], default="news")
    gen.add_argument("--k", type=int, default=3, help="number of categories")
    gen.add_argument("--vocab", type=int, default=120)
    gen.add_argument("--num-topics", type=int, default=None,
                     help="topic count (lda mode only)")
    gen.add_argument("--alpha", type=float, default=1.0)
    gen.add_argument("--beta", type=float, default=0.01)
    gen.add_argument("--gamma", default="5.0",
                     help="scalar or comma-separated per-category values")
    gen.add_argument("--rho", type=float, default=0.95)
    gen.add_argument("--transcripts", type=int, default=3)
    gen.add_argument("--sentences", default="30", help="count or low:high range")
    gen.add_argument("--tokens-per-sentence", default="8", help="count or low:high range")
    gen.add_argument("--truncation", type=int, default=200)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--from-manifest", default=None,
                     help="re-run from a recorded manifest")
    _add_common(gen)
    gen.set_defaults(handler=_cmd_generate)

    learn = subparsers.add_parser("learn-topics",
                                  help="cluster level-1 segments into topics")
    learn.add_argument("--corpus", required=True)
    learn.add_argument("--segments", default=None,
                       help="segmentation file supplying level-1 changepoints")
    learn.add_argument("--uniform-chunk", type=int, default=None,
                       help="chunk size when no segmentation file is given")
    learn.add_argument("--alpha", type=float, default=1.0)
    learn.add_argument("--beta", type=float, default=0.1)
    learn.add_argument("--iters", type=int, default=50)
    learn.add_argument("--out", required=True, help="output topics file")
    learn.add_argument("--from-manifest", default=None)
    _add_common(learn)
    learn.set_defaults(handler=_cmd_learn_topics)

    infer = subparsers.add_parser("infer", help="run blocked Gibbs inference")
    infer.add_argument("--corpus", required=True)
    infer.add_argument("--topics", default=None, help="initial topics file")
    infer.add_argument("--k", type=int, required=False, default=3)
    infer.add_argument("--alpha", type=float, default=1.0)
    infer.add_argument("--beta", type=float, default=0.01)
    infer.add_argument("--gamma", default="5.0")
    infer.add_argument("--rho", type=float, default=0.95)
    infer.add_argument("--iters", type=int, default=100)
    infer.add_argument("--burn-in", type=int, default=0)
    infer.add_argument("--candidate-window", type=int, default=None)
    infer.add_argument("--epsilon", type=float, default=1e-4)
    infer.add_argument("--stop-on-convergence", action="store_true")
    infer.add_argument("--out", required=True, help="output directory")
    infer.add_argument("--from-manifest", default=None)
    _add_common(infer)
    infer.set_defaults(handler=_cmd_infer)

    evaluate = subparsers.add_parser("evaluate", help="score a segmentation")
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--gold", required=True)
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--thresholds", default="10,500",
                          help="level1,level2 alignment thresholds in tokens")
    evaluate.add_argument("--out", default=None, help="optional report path")
    evaluate.add_argument("--from-manifest", default=None)
    _add_common(evaluate)
    evaluate.set_defaults(handler=_cmd_evaluate)

    dos = subparsers.add_parser("dos", help="degree-of-sharing utilities")
    dos_sub = dos.add_subparsers(dest="dos_command", required=True)
    dos_parse = dos_sub.add_parser("parse", help="parse a classification string")
    dos_parse.add_argument("string")
    _add_common(dos_parse)
    dos_parse.set_defaults(handler=_cmd_dos)
    dos_classify = dos_sub.add_parser("classify", help="name the model, if known")
    dos_classify.add_argument("string")
    _add_common(dos_classify)
    dos_classify.set_defaults(handler=_cmd_dos)
    dos_table = dos_sub.add_parser("table", help="print the reference table")
    _add_common(dos_table)
    dos_table.set_defaults(handler=_cmd_dos)

    pipeline = subparsers.add_parser(
        "pipeline", help="generate (or load), learn topics, infer, evaluate")
    pipeline.add_argument("--config", default=None,
                          help="flat JSON config; searched in HISEG_CONFIG_DIR too")
    pipeline.add_argument("--out", required=True, help="output directory")
    pipeline.add_argument("--from-manifest", default=None)
    pipeline.add_argument("--seed", type=int, default=None,
                          help="override the config seed")
    pipeline.add_argument("--format", choices=_FORMATS, default="text")
    pipeline.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "pipeline" and not (args.config or args.from_manifest):
        parser.error("pipeline needs --config or --from-manifest")
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        record = {"error": "FileNotFoundError", "message": str(exc),
                  "path": getattr(exc, "filename", None) or str(exc)}
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        return 2
    except HisegError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
