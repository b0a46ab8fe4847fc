"""Degree-of-sharing (DoS) classification strings.

A classification string describes how a hierarchical mixture model shares its
mixture components and its per-level mixture distributions.  A model with L
levels of grouping is written as L+1 semicolon-separated parts:

* part 1 describes the components: one share letter per level (L letters),
* part l+1 describes the level-l distributions: its share letters, then a
  dimensionality letter (``N`` not clustered, ``P`` parametric, ``NP``
  nonparametric), then an optional ``S`` if assignments at that level are
  sequential.

Share letters are ``F`` (fully shared), ``G`` (group-specific) and ``C``
(cluster-specific).  A level whose distributions are not in use is written as
a bare ``N`` with no share letters and no ``S``.  The number of share letters
on part l+1 is L-l, except that one-level models carry a single letter on
their distribution part (``C;F-P`` and friends), which is how all the
classifications in the reference table are written.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import ArityError, DosSyntaxError, FlagError, UnsupportedError

__all__ = [
    "ShareMode",
    "Dimensionality",
    "ThetaSpec",
    "DoSClassification",
    "parse_dos",
    "format_dos",
    "lookup_known_model",
    "known_models",
    "to_generative_config",
]


class ShareMode(enum.Enum):
    """How a component or distribution is shared at one grouping level."""

    FULL = "F"
    GROUP_SPECIFIC = "G"
    CLUSTER_SPECIFIC = "C"


class Dimensionality(enum.Enum):
    """Whether a level clusters its groups, and with how many clusters."""

    NOT_CLUSTERED = "N"
    PARAMETRIC = "P"
    NONPARAMETRIC = "NP"


_SHARE_LETTERS = {m.value: m for m in ShareMode}
_DIM_LETTERS = {d.value: d for d in Dimensionality}


def _expected_share_count(levels: int, level: int) -> int:
    # One-level models write a single share letter on their distribution part.
    if levels == 1:
        return 1
    return levels - level


@dataclass(frozen=True)
class ThetaSpec:
    """Sharing, dimensionality, and sequentiality of one level's distributions."""

    share_modes: tuple[ShareMode, ...]
    dimensionality: Dimensionality
    sequential: bool = False

    def __post_init__(self) -> None:
        if self.dimensionality is Dimensionality.NOT_CLUSTERED:
            if self.share_modes:
                raise ArityError("a not-clustered part carries no share letters")
            if self.sequential:
                raise FlagError("sequential flag is not allowed on a not-clustered part")


@dataclass(frozen=True)
class DoSClassification:
    """Parsed degree-of-sharing classification of a hierarchical mixture model."""

    phi_modes: tuple[ShareMode, ...]
    theta_specs: tuple[ThetaSpec, ...]

    def __post_init__(self) -> None:
        levels = len(self.phi_modes)
        if levels < 1:
            raise ArityError("a classification needs at least one level")
        if len(self.theta_specs) != levels:
            raise ArityError(
                f"expected {levels} distribution parts, got {len(self.theta_specs)}"
            )
        for index, spec in enumerate(self.theta_specs):
            level = index + 1
            if spec.dimensionality is Dimensionality.NOT_CLUSTERED:
                continue
            expected = _expected_share_count(levels, level)
            if len(spec.share_modes) != expected:
                raise ArityError(
                    f"level-{level} part has {len(spec.share_modes)} share letters, "
                    f"expected {expected}"
                )

    @property
    def levels(self) -> int:
        return len(self.phi_modes)


def _parse_phi_part(part: str) -> tuple[ShareMode, ...]:
    tokens = part.split("-")
    modes = []
    for token in tokens:
        if token == "S":
            raise FlagError("sequential flag is not allowed on the component part")
        if token in _DIM_LETTERS:
            raise DosSyntaxError(
                f"dimensionality letter {token!r} is not allowed on the component part"
            )
        if token not in _SHARE_LETTERS:
            raise DosSyntaxError(f"unknown letter {token!r} in component part")
        modes.append(_SHARE_LETTERS[token])
    return tuple(modes)


def _parse_theta_part(part: str, levels: int, level: int) -> ThetaSpec:
    tokens = part.split("-")
    if tokens == ["N"]:
        return ThetaSpec((), Dimensionality.NOT_CLUSTERED, False)
    for token in tokens:
        if token not in _SHARE_LETTERS and token not in _DIM_LETTERS and token != "S":
            raise DosSyntaxError(f"unknown letter {token!r} in level-{level} part")

    sequential = False
    if tokens[-1] == "S":
        sequential = True
        tokens = tokens[:-1]
    if "S" in tokens:
        raise FlagError(f"misplaced or repeated sequential flag in level-{level} part")
    if not tokens:
        raise ArityError(f"level-{level} part has a flag but no dimensionality")

    dim_letter = tokens[-1]
    if dim_letter == "N":
        if sequential:
            raise FlagError(
                f"sequential flag is not allowed on the not-clustered level-{level} part"
            )
        raise ArityError(f"a not-clustered level-{level} part must be a bare 'N'")
    if dim_letter not in ("P", "NP"):
        raise ArityError(f"level-{level} part is missing its dimensionality letter")

    share_tokens = tokens[:-1]
    expected = _expected_share_count(levels, level)
    if len(share_tokens) != expected:
        raise ArityError(
            f"level-{level} part has {len(share_tokens)} share letters, expected {expected}"
        )
    for token in share_tokens:
        if token not in _SHARE_LETTERS:
            raise DosSyntaxError(f"unknown letter {token!r} in level-{level} part")
    return ThetaSpec(
        tuple(_SHARE_LETTERS[t] for t in share_tokens),
        _DIM_LETTERS[dim_letter],
        sequential,
    )


def parse_dos(text: str) -> DoSClassification:
    """Parse a classification string.

    Accepts lowercase letters and surrounding whitespace; the canonical form
    produced by :func:`format_dos` is uppercase with no whitespace.

    Raises :class:`DosSyntaxError` for unknown letters, :class:`ArityError`
    when part or letter counts do not fit the level count, and
    :class:`FlagError` when the ``S`` flag is misplaced.
    """
    if not isinstance(text, str) or not text.strip():
        raise DosSyntaxError("empty classification string")
    cleaned = "".join(text.split()).upper()
    parts = cleaned.split(";")
    if any(not part for part in parts):
        raise DosSyntaxError("empty part in classification string")
    if len(parts) < 2:
        raise ArityError("a classification needs at least two ';'-separated parts")

    phi_modes = _parse_phi_part(parts[0])
    levels = len(phi_modes)
    if len(parts) != levels + 1:
        raise ArityError(
            f"{len(parts)} parts for a {levels}-level classification, expected {levels + 1}"
        )
    theta_specs = tuple(
        _parse_theta_part(parts[index], levels, index) for index in range(1, len(parts))
    )
    return DoSClassification(phi_modes, theta_specs)


def format_dos(classification: DoSClassification) -> str:
    """Render the canonical string form (uppercase, single hyphens)."""
    parts = ["-".join(m.value for m in classification.phi_modes)]
    for spec in classification.theta_specs:
        tokens = [m.value for m in spec.share_modes]
        tokens.append(spec.dimensionality.value)
        if spec.sequential:
            tokens.append("S")
        parts.append("-".join(tokens))
    return ";".join(parts)


#: The reference table of known model classifications.
_KNOWN_MODELS = {
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


def known_models() -> dict[str, str]:
    """Return the canonical-string -> model-name reference table."""
    return dict(_KNOWN_MODELS)


def lookup_known_model(classification: DoSClassification) -> Optional[str]:
    """Return the canonical model name for a known classification, else None."""
    return _KNOWN_MODELS.get(format_dos(classification))


#: Canonical strings that have an executable generative configuration.
_RECOVERY_MODES = {
    "C;F-NP": "dpmm",
    "C;F-NP-S": "sticky-hmm",
    "C-F;G-P;N": "lda",
    "C-C;C-NP;NP": "ndp-mask",
    "C-C-F;C-F-NP-S;G-P-S;N": "news",
}


def to_generative_config(classification: DoSClassification, **overrides):
    """Translate a classification into a forward-sampler configuration.

    Only the recovery set of classifications is executable; anything else
    raises :class:`UnsupportedError` naming the unsupported structure.
    Keyword overrides are passed through to the configuration.
    """
    from .generative import GenerativeConfig, Mode

    text = format_dos(classification)
    mode_name = _RECOVERY_MODES.get(text)
    if mode_name is None:
        known = lookup_known_model(classification)
        label = f"{text!r} ({known})" if known else repr(text)
        raise UnsupportedError(
            f"classification {label} has no forward-sampler configuration; "
            f"supported: {sorted(_RECOVERY_MODES)}"
        )
    return GenerativeConfig(mode=Mode(mode_name), **overrides)
