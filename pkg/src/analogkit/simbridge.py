"""Bridge between sizing and circuit evaluation.

A `SimulationDeck` is a renderable testbench netlist with the device under
test embedded as a subcircuit, a list of declared measurements, and the
parameter slots the sizing loop substitutes.  Decks are evaluated either
by a synthetic analytic model (fast, deterministic, used by tests and
demos) or by an external simulator command with regex parse rules.

`evaluate` never raises: timeouts, crashes, missing metrics, and template
errors all come back as a failed outcome with a detail string, because a
sizing run must survive individual bad points.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .netlist import Netlist, NetlistError, apply_sizing, emit

DUT_NAME = "dut"


class SimbridgeError(Exception):
    pass


@dataclass(frozen=True)
class EvalOutcome:
    """Result of one deck evaluation; failures are values, not exceptions."""

    status: str  # "ok" | "failed"
    values: dict[str, float] = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)
    detail: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise SimbridgeError(f"bad outcome status {self.status!r}")


@dataclass(frozen=True)
class SimulationDeck:
    """A bench netlist wrapping the DUT subcircuit.

    `measurements` are the metric keys this deck must yield;
    `slots` are the DUT parameter paths open for sizing substitution;
    `port_roles` maps each DUT subcircuit port net to its role.
    """

    name: str
    netlist: Netlist
    measurements: tuple[str, ...]
    slots: tuple[str, ...]
    port_roles: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "port_roles", dict(self.port_roles))

    def dut_body(self) -> Netlist:
        sub = self.netlist.subcircuit(DUT_NAME)
        if sub is None:
            raise SimbridgeError(f"deck {self.name!r} has no "
                                 f"{DUT_NAME!r} subcircuit")
        return sub.body

    def sized(self, assignment: Mapping[str, float]) -> "SimulationDeck":
        """Substitute sizing values into the DUT subcircuit."""
        unknown = sorted(set(assignment) - set(self.slots))
        if unknown:
            raise SimbridgeError(f"deck {self.name!r} has no slots for "
                                 f"{unknown}")
        sub = self.netlist.subcircuit(DUT_NAME)
        if sub is None:
            raise SimbridgeError(f"deck {self.name!r} has no "
                                 f"{DUT_NAME!r} subcircuit")
        body = apply_sizing(sub.body, assignment)
        subs = tuple(replace(s, body=body) if s.name == DUT_NAME else s
                     for s in self.netlist.subcircuits)
        return replace(self, netlist=replace(self.netlist, subcircuits=subs))

    def render(self, assignment: Mapping[str, float] | None = None) -> str:
        deck = self.sized(assignment) if assignment else self
        return emit(deck.netlist)


@dataclass(frozen=True)
class BackendConfig:
    """Where evaluations run.

    kind "synthetic": `model` names an entry in the synthetic catalog and
    `params` configures it.  kind "external": `command` is a template with
    {deck} and {outdir} placeholders, run with a timeout; `parse_rules`
    maps each metric to a regex with one float capture group applied to
    the simulator's stdout.
    """

    kind: str
    model: str = ""
    params: Mapping[str, object] = field(default_factory=dict)
    command: str = ""
    timeout_s: float = 60.0
    parse_rules: Mapping[str, str] = field(default_factory=dict)
    workdir: str | None = None
    keep_files: bool = False
    process_cap: int = 4

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "parse_rules", dict(self.parse_rules))
        if self.kind not in ("synthetic", "external"):
            raise SimbridgeError(f"unknown backend kind {self.kind!r}")
        if self.kind == "synthetic" and not self.model:
            raise SimbridgeError("synthetic backend needs a model name")
        if self.kind == "external":
            if not self.command:
                raise SimbridgeError("external backend needs a command")
            if "{deck}" not in self.command:
                raise SimbridgeError("external command must use the {deck} "
                                     "placeholder")
            if not self.parse_rules:
                raise SimbridgeError("external backend needs parse rules")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model": self.model,
                "params": dict(self.params), "command": self.command,
                "timeout_s": self.timeout_s,
                "parse_rules": dict(self.parse_rules),
                "workdir": self.workdir, "keep_files": self.keep_files,
                "process_cap": self.process_cap}

    @classmethod
    def from_dict(cls, data: Mapping) -> "BackendConfig":
        allowed = {"kind", "model", "params", "command", "timeout_s",
                   "parse_rules", "workdir", "keep_files", "process_cap"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise SimbridgeError(f"unknown backend config keys {unknown}")
        return cls(**{k: v for k, v in data.items()})


# ---------------------------------------------------------------------------
# measurement parsing (external backends)


def parse_measures(text: str, rules: Mapping[str, str]):
    """Apply regex rules to simulator output.

    Every rule must match or the whole parse fails; when a rule matches
    several times the last occurrence wins and a warning is emitted.
    Returns (values, missing) where missing lists unmatched metrics.
    """
    values: dict[str, float] = {}
    missing: list[str] = []
    for metric, pattern in rules.items():
        matches = list(re.finditer(pattern, text, re.MULTILINE))
        if not matches:
            missing.append(metric)
            continue
        if len(matches) > 1:
            warnings.warn(f"metric {metric!r} matched {len(matches)} times; "
                          "keeping the last occurrence")
        m = matches[-1]
        raw = m.group(1) if m.groups() else m.group(0)
        try:
            values[metric] = float(raw)
        except ValueError:
            missing.append(metric)
    return values, missing


def _run_external(deck: SimulationDeck, assignment, backend: BackendConfig):
    try:
        text = deck.render(assignment)
    except (NetlistError, SimbridgeError) as exc:
        return EvalOutcome("failed", detail=f"render error: {exc}")
    workdir = Path(backend.workdir) if backend.workdir else None
    if workdir:
        workdir.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=f"{deck.name}_", dir=workdir)
    outdir = Path(tmp)
    deck_path = outdir / "deck.sp"
    deck_path.write_text(text, encoding="utf-8")
    command = backend.command.format(deck=deck_path, outdir=outdir)
    try:
        proc = subprocess.run(shlex.split(command), capture_output=True,
                              text=True, timeout=backend.timeout_s)
    except subprocess.TimeoutExpired:
        return EvalOutcome("failed",
                           detail=f"timeout after {backend.timeout_s:g}s")
    except OSError as exc:
        return EvalOutcome("failed", detail=f"cannot run simulator: {exc}")
    finally:
        if not backend.keep_files:
            for p in sorted(outdir.glob("*")):
                try:
                    p.unlink()
                except OSError:
                    pass
            try:
                outdir.rmdir()
            except OSError:
                pass
    if proc.returncode != 0:
        return EvalOutcome("failed",
                           detail=f"simulator exited {proc.returncode}: "
                                  f"{proc.stderr.strip()[:200]}")
    values, missing = parse_measures(proc.stdout, backend.parse_rules)
    if missing:
        return EvalOutcome("failed",
                           detail=f"unparsed metrics: {', '.join(missing)}")
    wanted = {m: values[m] for m in deck.measurements if m in values}
    absent = [m for m in deck.measurements if m not in values]
    if absent:
        return EvalOutcome("failed",
                           detail=f"no parse rule covers: {', '.join(absent)}")
    return EvalOutcome("ok", values=wanted)


def _run_synthetic(deck, assignment, backend: BackendConfig):
    from . import synthetic
    try:
        model = synthetic.get_model(backend.model)
    except KeyError:
        return EvalOutcome("failed",
                           detail=f"unknown synthetic model "
                                  f"{backend.model!r}")
    try:
        values, units = model(deck, dict(assignment or {}),
                              dict(backend.params))
    except synthetic.SyntheticFailure as exc:
        return EvalOutcome("failed", detail=str(exc))
    except Exception as exc:  # a model bug must not kill the sizing run
        return EvalOutcome("failed",
                           detail=f"synthetic model error: {exc}")
    if deck is not None:
        absent = [m for m in deck.measurements if m not in values]
        if absent:
            return EvalOutcome("failed",
                               detail=f"model yields no "
                                      f"{', '.join(absent)}")
        values = {m: values[m] for m in deck.measurements}
        units = {m: units.get(m, "") for m in deck.measurements}
    return EvalOutcome("ok", values=dict(values), units=dict(units))


def evaluate(deck: SimulationDeck | None, assignment,
             backend: BackendConfig) -> EvalOutcome:
    """Evaluate one sizing point on one deck; never raises."""
    try:
        if backend.kind == "synthetic":
            return _run_synthetic(deck, assignment, backend)
        if deck is None:
            return EvalOutcome("failed",
                               detail="external backend needs a deck")
        return _run_external(deck, assignment, backend)
    except Exception as exc:  # last line of defence
        return EvalOutcome("failed", detail=f"backend error: {exc}")


def evaluate_batch(deck: SimulationDeck | None,
                   assignments: Sequence[Mapping[str, float]],
                   backend: BackendConfig) -> list[EvalOutcome]:
    """Evaluate many points, at most `process_cap` concurrently."""
    cap = max(1, int(backend.process_cap))
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(lambda a: evaluate(deck, a, backend),
                             assignments))


class DeckEvaluator:
    """Callable evaluator over several decks with derived metrics.

    Runs every deck on the same assignment, merges measurement sets, then
    applies derived-metric rules of the form name -> ("sub", a, b) meaning
    name = a - b.  Any deck failure fails the whole evaluation.
    """

    def __init__(self, decks: Sequence[SimulationDeck | None],
                 backend: BackendConfig,
                 derived: Mapping[str, tuple] | None = None):
        self.decks = list(decks)
        self.backend = backend
        self.derived = dict(derived or {})
        for name, rule in self.derived.items():
            if len(rule) != 3 or rule[0] != "sub":
                raise SimbridgeError(f"derived metric {name!r}: only "
                                     "('sub', a, b) rules are supported")

    def __call__(self, assignment: Mapping[str, float]) -> EvalOutcome:
        merged: dict[str, float] = {}
        units: dict[str, str] = {}
        for deck in self.decks:
            outcome = evaluate(deck, assignment, self.backend)
            if outcome.status != "ok":
                name = deck.name if deck is not None else "<none>"
                return EvalOutcome("failed",
                                   detail=f"deck {name}: {outcome.detail}")
            for k, v in outcome.values.items():
                if k in merged and merged[k] != v:
                    return EvalOutcome(
                        "failed",
                        detail=f"metric {k!r} measured twice with "
                               "disagreeing values")
                merged[k] = v
                if outcome.units.get(k):
                    units[k] = outcome.units[k]
        for name, (_op, a, b) in self.derived.items():
            if a not in merged or b not in merged:
                return EvalOutcome("failed",
                                   detail=f"derived metric {name!r} needs "
                                          f"{a!r} and {b!r}")
            merged[name] = merged[a] - merged[b]
            units[name] = units.get(a, "")
        return EvalOutcome("ok", values=merged, units=units)
