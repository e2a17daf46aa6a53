"""Search space over device parameters with matched-device ties.

A `ParameterSpace` lists every free device parameter with bounds and a
sampling scale.  Ties declare follower parameters whose values are derived
from a leader (equal, or scaled by a fixed ratio), which removes the
followers from the optimizer-visible space: the optimizer works on the
reduced vector and `expand` reconstructs the full assignment.  Equal-mode
followers receive the leader's value bitwise unchanged, so matched devices
stay matched exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from ..kg import CircuitEntity, TieGroup
from ..netlist import DeviceKind, Netlist


class SpaceError(Exception):
    pass


@dataclass(frozen=True)
class Parameter:
    path: str
    lower: float
    upper: float
    scale: str = "log"
    integer: bool = False

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise SpaceError(f"{self.path}: unknown scale {self.scale!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SpaceError(f"{self.path}: bounds must be finite")
        if self.lower >= self.upper:
            raise SpaceError(f"{self.path}: lower bound {self.lower!r} must "
                             f"be below upper bound {self.upper!r}")
        if self.scale == "log" and self.lower <= 0:
            raise SpaceError(f"{self.path}: log scale needs positive bounds")


@dataclass(frozen=True)
class Tie:
    """follower_i = leader (equal mode) or leader * factors[i] (ratio)."""

    leader: str
    followers: tuple[str, ...]
    mode: str = "equal"
    factors: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "followers", tuple(self.followers))
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.followers:
            raise SpaceError(f"tie on {self.leader}: no followers")
        if self.mode not in ("equal", "ratio"):
            raise SpaceError(f"tie on {self.leader}: unknown mode "
                             f"{self.mode!r}")
        if self.mode == "ratio" and len(self.factors) != len(self.followers):
            raise SpaceError(f"tie on {self.leader}: need one factor per "
                             "follower")
        if self.mode == "equal" and self.factors:
            raise SpaceError(f"tie on {self.leader}: equal mode takes no "
                             "factors")


class ParameterSpace:
    """Bounded parameters plus ties; exposes the reduced (free) space."""

    def __init__(self, params: Sequence[Parameter], ties: Sequence[Tie] = ()):
        self.params = tuple(params)
        self.ties = tuple(ties)
        self._by_path = {p.path: p for p in self.params}
        if len(self._by_path) != len(self.params):
            raise SpaceError("duplicate parameter paths")
        leaders = set()
        followers: dict[str, tuple[Tie, int]] = {}
        for tie in self.ties:
            if tie.leader not in self._by_path:
                raise SpaceError(f"tie leader {tie.leader!r} is not a "
                                 "parameter")
            leaders.add(tie.leader)
            for i, f in enumerate(tie.followers):
                if f not in self._by_path:
                    raise SpaceError(f"tie follower {f!r} is not a parameter")
                if f in followers:
                    raise SpaceError(f"{f!r} follows more than one tie")
                if f == tie.leader:
                    raise SpaceError(f"{f!r} cannot follow itself")
                followers[f] = (tie, i)
        overlap = leaders & set(followers)
        if overlap:
            raise SpaceError(f"parameters {sorted(overlap)} are both leader "
                             "and follower")
        self._followers = followers
        self.free = tuple(p for p in self.params if p.path not in followers)

    @property
    def dim(self) -> int:
        """Number of parameters before tie reduction."""
        return len(self.params)

    @property
    def effective_dim(self) -> int:
        """Number of free parameters the optimizer actually sees."""
        return len(self.free)

    def parameter(self, path: str) -> Parameter:
        try:
            return self._by_path[path]
        except KeyError:
            raise SpaceError(f"unknown parameter {path!r}") from None

    # -- reduced vector <-> full assignment --------------------------------

    def expand(self, reduced: Sequence[float]) -> dict[str, float]:
        """Expand a reduced vector to a {path: value} full assignment."""
        if len(reduced) != self.effective_dim:
            raise SpaceError(f"reduced vector has {len(reduced)} entries, "
                             f"space has {self.effective_dim} free "
                             "parameters")
        out: dict[str, float] = {}
        for p, v in zip(self.free, reduced):
            v = float(v)
            if not (p.lower <= v <= p.upper):
                raise SpaceError(f"{p.path}: value {v!r} outside "
                                 f"[{p.lower!r}, {p.upper!r}]")
            if p.integer and v != int(v):
                raise SpaceError(f"{p.path}: integer parameter got {v!r}")
            out[p.path] = v
        for tie in self.ties:
            lead = out[tie.leader]
            for i, f in enumerate(tie.followers):
                v = lead if tie.mode == "equal" else lead * tie.factors[i]
                fp = self._by_path[f]
                if fp.integer and v != int(v):
                    v = float(round(v))
                if not (fp.lower <= v <= fp.upper):
                    raise SpaceError(
                        f"tie expansion drives {f} to {v!r}, outside "
                        f"[{fp.lower!r}, {fp.upper!r}]")
                out[f] = v
        return {p.path: out[p.path] for p in self.params}

    def reduce(self, assignment: Mapping[str, float]) -> list[float]:
        """Extract the reduced vector from a full assignment."""
        return [float(assignment[p.path]) for p in self.free]

    # -- unit-cube mapping --------------------------------------------------

    def to_unit(self, reduced: Sequence[float]) -> np.ndarray:
        z = np.empty(self.effective_dim)
        for i, (p, v) in enumerate(zip(self.free, reduced)):
            if p.scale == "log":
                z[i] = (math.log(v) - math.log(p.lower)) / \
                    (math.log(p.upper) - math.log(p.lower))
            else:
                z[i] = (v - p.lower) / (p.upper - p.lower)
        return np.clip(z, 0.0, 1.0)

    def from_unit(self, z: Sequence[float]) -> list[float]:
        """Map unit-cube coordinates to in-bounds reduced values.

        Integer parameters are rounded to the nearest whole value.
        """
        if len(z) != self.effective_dim:
            raise SpaceError(f"unit vector has {len(z)} entries, expected "
                             f"{self.effective_dim}")
        out = []
        for p, u in zip(self.free, z):
            u = min(1.0, max(0.0, float(u)))
            if p.scale == "log":
                v = math.exp(math.log(p.lower)
                             + u * (math.log(p.upper) - math.log(p.lower)))
            else:
                v = p.lower + u * (p.upper - p.lower)
            v = min(p.upper, max(p.lower, v))
            if p.integer:
                v = float(round(v))
                v = min(p.upper, max(p.lower, v))
            out.append(v)
        return out

    def sample(self, n: int, seed: int) -> list[list[float]]:
        """n quasi-random (scrambled Sobol) reduced-space points."""
        if n < 1:
            raise SpaceError("need at least one sample")
        sob = qmc.Sobol(d=self.effective_dim, scramble=True,
                        seed=np.random.default_rng(
                            np.random.SeedSequence(seed)))
        with warnings.catch_warnings():
            # balance properties are irrelevant here; any n is allowed
            warnings.filterwarnings("ignore", message=".*balance properties.*")
            unit = sob.random(n)
        return [self.from_unit(row) for row in unit]


# ---------------------------------------------------------------------------
# building spaces from stored circuits

#: Default bounds: MOS channel length, width, and finger count, plus
#: passives and bias current values.
DEFAULT_BOUNDS = {
    "L": (30e-9, 1e-6, "log"),
    "W": (100e-9, 3e-6, "log"),
    "nf": (1.0, 100.0, "log"),
    "R": (100.0, 1e6, "log"),
    "C": (50e-15, 100e-12, "log"),
    "I": (1e-6, 1e-3, "log"),
}


def _bounds_for(kind: DeviceKind, param: str, overrides: Mapping) -> tuple | None:
    table = dict(DEFAULT_BOUNDS)
    table.update(overrides)
    if kind is DeviceKind.MOS:
        return table.get(param)
    if kind is DeviceKind.RESISTOR:
        return table.get("R")
    if kind is DeviceKind.CAPACITOR:
        return table.get("C")
    if kind is DeviceKind.CURRENT_SOURCE:
        return table.get("I")
    # voltage sources are bias rails fixed by the designer, not sized
    return None


def space_from_netlist(netlist: Netlist, tie_groups: Sequence[TieGroup] = (),
                       overrides: Mapping | None = None) -> ParameterSpace:
    """Build a space over every sizeable parameter in a netlist.

    MOS devices contribute W and L (and nf when present), passives and
    current sources contribute their value; voltage sources are skipped.
    Tie groups become per-parameter ties led by the group's first device.
    """
    overrides = overrides or {}
    params: list[Parameter] = []
    for c in netlist.components:
        for name in c.params:
            b = _bounds_for(c.kind, name, overrides)
            if b is None:
                continue
            lo, hi, scale = b
            params.append(Parameter(f"{c.name}.{name}", lo, hi, scale,
                                    integer=(name == "nf")))
    ties: list[Tie] = []
    for tg in tie_groups:
        leader, *rest = tg.components
        for pname in tg.params:
            ties.append(Tie(
                leader=f"{leader}.{pname}",
                followers=tuple(f"{r}.{pname}" for r in rest),
                mode=tg.mode,
                factors=tg.factors if tg.mode == "ratio" else ()))
    return ParameterSpace(params, ties)


def space_from_entity(entity: CircuitEntity,
                      overrides: Mapping | None = None,
                      tied: bool = True) -> ParameterSpace:
    """Space for a stored circuit; `tied=False` drops the tie groups."""
    groups = entity.local.tie_groups if tied else ()
    return space_from_netlist(entity.netlist, groups, overrides)
