"""Scalar figure of merit over simulated metrics.

Each metric contributes one term.  Maximize terms are normalized to the
metric's observed range and saturate at an optional bound, so pushing a
metric past its bound earns nothing.  Minimize terms mirror that with the
sign flipped and a floor bound.  Target terms subtract a normalized
distance from the desired value.  Metrics flagged `log_scale` are taken
through a decimal log before normalization, which keeps wide-range
quantities (bandwidths, delays) comparable with dB-like ones.

Normalization ranges come from the initial random samples of a sizing run
(`estimate_norms`) and stay fixed afterwards, so merit values remain
comparable across the whole run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence


class FoMError(Exception):
    pass


@dataclass(frozen=True)
class MetricTerm:
    """One metric's contribution to the figure of merit.

    norm is (min, max) on the transformed scale (decimal log when
    log_scale is set); bound and target are given in natural units.
    """

    metric: str
    goal: str
    weight: float = 1.0
    bound: float | None = None
    target: float | None = None
    log_scale: bool = False
    norm: tuple[float, float] | None = None

    def __post_init__(self):
        if self.goal not in ("maximize", "minimize", "target"):
            raise FoMError(f"{self.metric}: unknown goal {self.goal!r}")
        if self.goal == "target" and self.target is None:
            raise FoMError(f"{self.metric}: target goal needs a target value")
        if self.goal != "target" and self.target is not None:
            raise FoMError(f"{self.metric}: only target goals take a target")
        if self.weight <= 0:
            raise FoMError(f"{self.metric}: weight must be positive")

    def transform(self, value: float) -> float:
        if not self.log_scale:
            return value
        if value <= 0:
            raise FoMError(f"{self.metric}: log-scale metric must be "
                           f"positive, got {value!r}")
        return math.log10(value)


@dataclass(frozen=True)
class FoMConfig:
    terms: tuple[MetricTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        names = [t.metric for t in self.terms]
        if len(set(names)) != len(names):
            raise FoMError("duplicate metric terms")

    def metrics(self) -> list[str]:
        return [t.metric for t in self.terms]

    @property
    def has_norms(self) -> bool:
        return all(t.norm is not None for t in self.terms)


def estimate_norms(config: FoMConfig,
                   samples: Sequence[Mapping[str, float]]) -> FoMConfig:
    """Fill each term's norm from observed samples (transformed scale).

    Needs at least two samples.  A metric that never varies gets its range
    widened by a machine-scale epsilon and a warning, so later divisions
    stay finite.
    """
    if len(samples) < 2:
        raise FoMError(f"norm estimation needs at least 2 samples, "
                       f"got {len(samples)}")
    new_terms = []
    for term in config.terms:
        values = []
        for s in samples:
            if term.metric not in s:
                raise FoMError(f"sample lacks metric {term.metric!r}")
            v = float(s[term.metric])
            if not math.isfinite(v):
                raise FoMError(f"non-finite sample for {term.metric!r}")
            values.append(term.transform(v))
        lo, hi = min(values), max(values)
        if lo == hi:
            eps = max(abs(lo) * 1e-9, 1e-12)
            warnings.warn(f"metric {term.metric!r} is constant over the "
                          f"norm samples; widening range by {eps:g}")
            lo, hi = lo - eps, hi + eps
        new_terms.append(replace(term, norm=(lo, hi)))
    return FoMConfig(tuple(new_terms))


def _term_value(term: MetricTerm, value: float) -> float:
    if term.norm is None:
        raise FoMError(f"{term.metric}: norm not set; call estimate_norms "
                       "or provide preset norms")
    lo, hi = term.norm
    span = hi - lo
    t = term.transform(value)
    if term.goal == "maximize":
        if term.bound is not None:
            t = min(t, term.transform(term.bound))
        return term.weight * (t - lo) / span
    if term.goal == "minimize":
        if term.bound is not None:
            t = max(t, term.transform(term.bound))
        return term.weight * (hi - t) / span
    # target: a pure penalty, zero when on target
    return -term.weight * abs(t - term.transform(term.target)) / span


def compute_fom(config: FoMConfig,
                measurements: Mapping[str, float]) -> float:
    """Weighted sum of term values for one measurement set."""
    total = 0.0
    for term in config.terms:
        if term.metric not in measurements:
            raise FoMError(f"measurements lack metric {term.metric!r}")
        v = float(measurements[term.metric])
        if not math.isfinite(v):
            raise FoMError(f"non-finite measurement for {term.metric!r}: "
                           f"{v!r}")
        total += _term_value(term, v)
    return total


# ---------------------------------------------------------------------------
# stock configurations


def opamp_fom() -> FoMConfig:
    """Merit for a compensated OPAMP.

    Differential gain, common-mode rejection, and supply rejection are
    maximized with an 80 dB saturation bound; unity-gain bandwidth is
    maximized on a log scale capped at 10 MHz; phase margin is penalized
    by its distance from 60 degrees.
    """
    return FoMConfig((
        MetricTerm("dm_gain", "maximize", bound=80.0),
        MetricTerm("cmrr", "maximize", bound=80.0),
        MetricTerm("psrr", "maximize", bound=80.0),
        MetricTerm("gbw", "maximize", bound=1e7, log_scale=True),
        MetricTerm("pm", "target", target=60.0),
    ))


def comparator_fom() -> FoMConfig:
    """Merit for a clocked comparator.

    Input-referred offset, propagation delay, and power are minimized on
    log scales with floors of 100 uV, 1 ns, and 100 uW: improving a metric
    past its floor earns nothing more.
    """
    return FoMConfig((
        MetricTerm("offset_voltage", "minimize", bound=1e-4, log_scale=True),
        MetricTerm("propagation_delay", "minimize", bound=1e-9,
                   log_scale=True),
        MetricTerm("power", "minimize", bound=1e-4, log_scale=True),
    ))
