"""Golden tests and grammar properties for degree-of-sharing strings."""

import pytest
from hypothesis import given, strategies as st

from hiseg.dos import (
    Dimensionality,
    DoSClassification,
    ShareMode,
    ThetaSpec,
    format_dos,
    known_models,
    lookup_known_model,
    parse_dos,
    to_generative_config,
)
from hiseg.errors import ArityError, DosSyntaxError, FlagError, UnsupportedError
from hiseg.generative import Mode

GOLDEN = {
    "C;F-P": "GMM",
    "C;F-NP": "DP-MM",
    "C;F-NP-S": "HDP-HMM",
    "C-F;G-P;N": "LDA",
    "C-F;G-NP;N": "HDP",
    "C-C;C-NP;NP": "NDP",
    "C-F-F;C-F-NP;C-NP;NP": "MLC-HDP",
    "C-F-F;C-G-P;G-NP-S;N": "TSM",
    "C-F-F;F-G-NP;N;N": "STM",
    "C-F-F;C-F-NP-S;F-NP-S;N": "LaDP",
    "C-C-F;C-F-NP-S;G-P-S;N": "NewsTranscript",
}

MALFORMED = [
    ("", DosSyntaxError),
    ("   ", DosSyntaxError),
    ("C", ArityError),                      # no distribution part at all
    ("C-F;G", ArityError),                  # 2 parts for a 2-level model
    ("C-F;G-NP", ArityError),               # missing the level-2 part
    ("C-F;G-NP;N;N", ArityError),           # too many parts
    ("C-F-F;C-NP;NP", ArityError),          # level-1 part one share letter short
    ("C-F;G-F-NP;N", ArityError),           # level-1 part one share letter long
    ("C;P", ArityError),                    # one-level model missing its share letter
    ("C-F;NP;N", ArityError),               # dimensionality with no share letter
    ("C-F;G-N;N", ArityError),              # not-clustered part with share letters
    ("C;F", ArityError),                    # missing dimensionality letter
    ("C;;F-P", DosSyntaxError),             # empty part
    ("X;F-P", DosSyntaxError),              # unknown share letter
    ("C;F-Q", DosSyntaxError),              # unknown dimensionality letter
    ("NP;F-P", DosSyntaxError),             # dimensionality on the component part
    ("C-F;G-NP-S-S;N", FlagError),          # repeated sequential flag
    ("C-F;G-S-NP;N", FlagError),            # flag before the dimensionality
    ("C-F;G-NP;N-S", FlagError),            # flag on a not-clustered part
    ("C-S;F-P", FlagError),                 # flag on the component part
]


class TestGolden:
    @pytest.mark.parametrize("text,name", sorted(GOLDEN.items()))
    def test_parse_format_roundtrip(self, text, name):
        assert format_dos(parse_dos(text)) == text

    @pytest.mark.parametrize("text,name", sorted(GOLDEN.items()))
    def test_lookup(self, text, name):
        assert lookup_known_model(parse_dos(text)) == name

    def test_table_matches_golden(self):
        assert known_models() == GOLDEN

    def test_lookup_injective(self):
        names = list(known_models().values())
        assert len(names) == len(set(names)) == 11


class TestParse:
    def test_one_level_structure(self):
        c = parse_dos("C;F-P")
        assert c.levels == 1
        assert c.phi_modes == (ShareMode.CLUSTER_SPECIFIC,)
        assert c.theta_specs[0].share_modes == (ShareMode.FULL,)
        assert c.theta_specs[0].dimensionality is Dimensionality.PARAMETRIC
        assert not c.theta_specs[0].sequential

    def test_two_level_structure(self):
        c = parse_dos("C-F;G-NP;N")
        assert c.levels == 2
        assert c.theta_specs[0].share_modes == (ShareMode.GROUP_SPECIFIC,)
        assert c.theta_specs[0].dimensionality is Dimensionality.NONPARAMETRIC
        assert c.theta_specs[1].share_modes == ()
        assert c.theta_specs[1].dimensionality is Dimensionality.NOT_CLUSTERED

    def test_three_level_structure(self):
        c = parse_dos("C-F-F;C-F-NP;C-NP;NP")
        assert c.levels == 3
        assert [len(s.share_modes) for s in c.theta_specs] == [2, 1, 0]

    def test_sequential_flags(self):
        c = parse_dos("C-C-F;C-F-NP-S;G-P-S;N")
        assert [s.sequential for s in c.theta_specs] == [True, True, False]

    def test_lowercase_and_whitespace_canonicalized(self):
        assert format_dos(parse_dos("  c-f ; g-np ; n ")) == "C-F;G-NP;N"

    def test_part_count_law(self):
        # parts must equal hyphen count of part 1 plus 2
        for text in GOLDEN:
            hyphens = text.split(";")[0].count("-")
            assert len(text.split(";")) == hyphens + 2

    @pytest.mark.parametrize("text,error", MALFORMED)
    def test_malformed(self, text, error):
        with pytest.raises(error):
            parse_dos(text)


_share = st.sampled_from(list(ShareMode))


@st.composite
def classifications(draw):
    levels = draw(st.integers(min_value=1, max_value=4))
    phi = tuple(draw(_share) for _ in range(levels))
    specs = []
    for level in range(1, levels + 1):
        if levels > 1 and draw(st.booleans()) and level > 1:
            specs.append(ThetaSpec((), Dimensionality.NOT_CLUSTERED))
            continue
        count = 1 if levels == 1 else levels - level
        share = tuple(draw(_share) for _ in range(count))
        dim = draw(st.sampled_from([Dimensionality.PARAMETRIC,
                                    Dimensionality.NONPARAMETRIC]))
        specs.append(ThetaSpec(share, dim, draw(st.booleans())))
    return DoSClassification(phi, tuple(specs))


class TestRoundTrip:
    @given(classifications())
    def test_format_parse_identity(self, classification):
        assert parse_dos(format_dos(classification)) == classification

    @given(classifications())
    def test_parse_format_identity(self, classification):
        text = format_dos(classification)
        assert format_dos(parse_dos(text)) == text


class TestGenerativeBridge:
    def test_dpmm_recovery(self):
        config = to_generative_config(parse_dos("C;F-NP"))
        assert config.mode is Mode.DPMM

    def test_sticky_recovery(self):
        config = to_generative_config(parse_dos("C;F-NP-S"))
        assert config.mode is Mode.STICKY_HMM

    def test_lda_recovery(self):
        config = to_generative_config(parse_dos("C-F;G-P;N"), num_topics=7)
        assert config.mode is Mode.FINITE_LDA
        assert config.num_topics == 7

    def test_ndp_recovery(self):
        assert to_generative_config(parse_dos("C-C;C-NP;NP")).mode is Mode.NDP_MASK

    def test_news_recovery(self):
        config = to_generative_config(parse_dos("C-C-F;C-F-NP-S;G-P-S;N"),
                                      num_categories=5)
        assert config.mode is Mode.NEWS_TRANSCRIPT

    def test_unsupported_names_model(self):
        with pytest.raises(UnsupportedError, match="STM"):
            to_generative_config(parse_dos("C-F-F;F-G-NP;N;N"))

    def test_unsupported_hdp(self):
        with pytest.raises(UnsupportedError):
            to_generative_config(parse_dos("C-F;G-NP;N"))

    def test_unknown_string_lookup_none(self):
        assert lookup_known_model(parse_dos("C-F;G-P;P")) is None
