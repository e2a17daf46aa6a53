"""End-to-end design loop: specification in, sized netlist out.

Each topology attempt walks the full chain — ask for a strategy, convert
its blocks to query triplets, retrieve parts from the store (tie-breaking
where ranks collide), assemble them, wrap the result in testbenches, and
size with the optimizer.  Achieved metrics are checked against the
specification; a miss becomes a reversed cause-effect fewshot for the
next attempt, so the strategy request sees what the failed topology
actually delivered.

Everything the loop writes goes under one run directory: per-attempt
strategies, part selections, trajectories and sized netlists, plus a
top-level report and a history ledger with one entry per attempt.  With
a scripted provider and a synthetic backend the whole run is offline and
byte-deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .assembly import (AssembledCircuit, AssemblyError, assemble,
                       attach_testbench, plan_connections)
from .kg import KGError, Store, normalize_text
from .netlist import apply_sizing, emit
from .simbridge import BackendConfig, DeckEvaluator, SimbridgeError
from .sizing import (BOConfig, BOError, BOResult, FoMConfig, FoMError,
                     MetricTerm, run_bo, space_from_netlist,
                     write_trajectory)
from .strategy import (DesignHistoryEntry, DesignSpec, DesignStrategy,
                       MetricTarget, Provider, ProviderConfig, StrategyBlock,
                       StrategyError, build_regeneration_fewshot,
                       kg_vocabulary, make_provider, request_strategy,
                       spec_from_dict, spec_to_dict, strategy_to_triplets,
                       tie_break)

__all__ = [
    "AttemptOutcome",
    "DERIVED_METRICS",
    "DesignReport",
    "PipelineError",
    "RunManifest",
    "design_loop",
    "fom_from_spec",
    "measurement_key",
    "required_bench_metrics",
    "run_design",
    "seed_fewshots",
    "target_met",
]

log = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


# ---------------------------------------------------------------------------
# metric translation

# Rejection ratios are differences of measured gains; benches never report
# them directly.  name -> ("sub", minuend, subtrahend) on measurement keys.
DERIVED_METRICS: Mapping[str, tuple] = {
    "cmrr": ("sub", "dm_gain", "cm_gain"),
    "psrr": ("sub", "dm_gain", "ps_gain"),
}

# Metrics whose useful range spans decades get optimized on a decimal log.
_LOG_SCALE = frozenset({"gbw", "offset voltage", "propagation delay",
                        "power"})

# Metrics where overshoot is as bad as undershoot: a "> v" requirement
# still means "stay near v", so it becomes a proximity penalty rather
# than open-ended maximization (phase margin past spec costs settling).
_PROXIMITY = frozenset({"pm", "phase margin"})


def measurement_key(metric: str) -> str:
    """Spec metric name -> measurement dictionary key."""
    return normalize_text(metric).replace(" ", "_")


def fom_from_spec(spec: DesignSpec) -> FoMConfig:
    """Translate targets into merit terms.

    The target value itself is the clamp bound: pushing a metric past its
    requirement earns nothing more, which spreads optimization pressure
    across the still-unmet metrics.  Equality targets (and proximity
    metrics) become distance penalties.
    """
    terms = []
    for t in spec.targets:
        name = normalize_text(t.metric)
        kwargs = dict(log_scale=name in _LOG_SCALE)
        if name in _PROXIMITY or t.comparator == "=":
            term = MetricTerm(measurement_key(t.metric), "target",
                              target=t.value, **kwargs)
        elif t.comparator in (">", ">="):
            term = MetricTerm(measurement_key(t.metric), "maximize",
                              bound=t.value, **kwargs)
        else:
            term = MetricTerm(measurement_key(t.metric), "minimize",
                              bound=t.value, **kwargs)
        terms.append(term)
    return FoMConfig(tuple(terms))


def target_met(target: MetricTarget, value: float) -> bool:
    if target.comparator == ">":
        return value > target.value
    if target.comparator == ">=":
        return value >= target.value
    if target.comparator == "<":
        return value < target.value
    if target.comparator == "<=":
        return value <= target.value
    return abs(value - target.value) <= 1e-6 * max(1.0, abs(target.value))


def required_bench_metrics(spec: DesignSpec) -> list[str]:
    """Measured quantities the benches must cover, derived ones expanded."""
    wanted: list[str] = []
    for t in spec.targets:
        key = measurement_key(t.metric)
        if key in DERIVED_METRICS:
            _op, a, b = DERIVED_METRICS[key]
            parts = [a.replace("_", " "), b.replace("_", " ")]
        else:
            parts = [normalize_text(t.metric)]
        for name in parts:
            if name not in wanted:
                wanted.append(name)
    return wanted


def _derived_rules(spec: DesignSpec) -> dict[str, tuple]:
    return {key: DERIVED_METRICS[key]
            for key in (measurement_key(t.metric) for t in spec.targets)
            if key in DERIVED_METRICS}


# ---------------------------------------------------------------------------
# seed few-shots

# The first strategy request has no history, so it leans on a worked
# example from the other circuit family: close enough in vocabulary to
# anchor the format, different enough not to dictate the answer.


def _comparator_example() -> DesignHistoryEntry:
    spec = DesignSpec(
        circuit_class="comparator",
        targets=(MetricTarget("offset voltage", "<", 5e-4, "V"),
                 MetricTarget("propagation delay", "<", 2e-9, "s"),
                 MetricTarget("power", "<", 1.5e-4, "W")),
        environment={"supply": "1.2"})
    strategy = DesignStrategy(
        blocks=(StrategyBlock("stage-1",
                              {"family": "latch comparator",
                               "input": "differential input pair"}),),
        rationale=("Sub-millivolt offset at nanosecond decision speed "
                   "with a tight power budget points to a clocked "
                   "regenerative structure: a differential pair senses "
                   "the inputs and a latch regenerates the decision, "
                   "burning no static current."))
    return DesignHistoryEntry(spec=spec, strategy=strategy,
                              topology="latch comparator", met=True)


def _amplifier_example() -> DesignHistoryEntry:
    spec = DesignSpec(
        circuit_class="operational amplifier",
        targets=(MetricTarget("dm gain", ">", 60.0, "dB"),
                 MetricTarget("gbw", ">", 1e6, "Hz"),
                 MetricTarget("pm", ">", 60.0, "deg")),
        environment={"load capacitance": "10p"})
    strategy = DesignStrategy(
        blocks=(StrategyBlock("stage-1",
                              {"input": "differential input pair",
                               "load": "pmos current mirror"}),
                StrategyBlock("bias", {"function": "bias generation"})),
        rationale=("Sixty decibels with a light load fits a single "
                   "differential stage with a mirror load; a current "
                   "reference sets the tail bias, and with one dominant "
                   "pole the phase margin needs no compensation "
                   "network."))
    return DesignHistoryEntry(spec=spec, strategy=strategy,
                              topology="single stage amplifier", met=True)


def seed_fewshots(circuit_class: str) -> list[DesignHistoryEntry]:
    """Cross-family worked example to bootstrap the first request."""
    if "comparator" in normalize_text(circuit_class):
        return [_amplifier_example()]
    return [_comparator_example()]


# ---------------------------------------------------------------------------
# attempt bookkeeping


@dataclass(frozen=True)
class AttemptOutcome:
    """Everything one topology attempt produced."""

    index: int
    topology: tuple[str, ...]
    strategy: DesignStrategy
    fom: float
    achieved: Mapping[str, float]
    unmet: tuple[str, ...]
    met: bool
    evaluations: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "achieved", dict(self.achieved))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "topology": list(self.topology),
            "fom": self.fom,
            "achieved": {k: self.achieved[k] for k in sorted(self.achieved)},
            "unmet": list(self.unmet),
            "met": self.met,
            "evaluations": self.evaluations,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class DesignReport:
    status: str  # "met" | "infeasible"
    attempts: tuple[AttemptOutcome, ...]
    best_attempt: int  # 1-based index into attempts; 0 when none ran
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "status": self.status,
            "best_attempt": self.best_attempt,
            "reason": self.reason,
            "attempts": [a.to_dict() for a in self.attempts],
        }


def _history_record(entry: DesignHistoryEntry) -> dict:
    return {
        "spec": spec_to_dict(entry.spec),
        "strategy": {
            "rationale": entry.strategy.rationale,
            "blocks": [{"role": b.role, "description": dict(b.description)}
                       for b in entry.strategy.blocks],
        },
        "topology": entry.topology,
        "achieved": {k: entry.achieved[k] for k in sorted(entry.achieved)},
        "met": entry.met,
    }


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# part selection


def _select_parts(strategy: DesignStrategy, spec: DesignSpec, store: Store,
                  provider: Provider) -> tuple[list, list[str]]:
    """Resolve each block to one stored entity; returns (parts, warnings).

    Raises PipelineError with a "no candidates" message when a block
    matches nothing — the caller turns that into an infeasible outcome.
    """
    if not len(store):
        raise PipelineError("no candidates: the store is empty")
    vocab = kg_vocabulary(store)
    goal_bits = "; ".join(t.render() for t in spec.targets)
    parts = []
    warnings: list[str] = []
    for block in strategy.blocks:
        probe = DesignStrategy(blocks=(block,))
        extraction = strategy_to_triplets(probe, provider, vocabulary=vocab)
        warnings.extend(extraction.warnings)
        hits = [h for h in store.query(extraction.triplets)
                if h.entity.entity_class != "testbench"]
        if not hits:
            raise PipelineError(
                f"no candidates in the store for block {block.role!r}")
        top = [h.entity.entity_id for h in hits
               if h.matched == hits[0].matched]
        if len(top) > 1:
            goal = f"{block.role} for a {spec.circuit_class}"
            if goal_bits:
                goal += f" meeting: {goal_bits}"
            chosen = tie_break(top, provider, goal=goal)
            log.info("tie between %s resolved to %s", top, chosen)
        else:
            chosen = top[0]
        parts.append(store.get(chosen))
    return parts, warnings


def _check_spec(spec: DesignSpec, measurements: Mapping[str, float]
                ) -> tuple[bool, dict[str, float], list[str]]:
    achieved: dict[str, float] = {}
    unmet: list[str] = []
    for t in spec.targets:
        key = measurement_key(t.metric)
        if key not in measurements:
            unmet.append(f"{t.render()} (not measured)")
            continue
        value = float(measurements[key])
        achieved[t.metric] = value
        if not target_met(t, value):
            unmet.append(f"{t.render()} (achieved {value:g})")
    return not unmet, achieved, unmet


# ---------------------------------------------------------------------------
# the loop


def design_loop(spec: DesignSpec, store: Store, provider: Provider,
                backend: BackendConfig, bo: BOConfig, out_dir,
                max_attempts: int = 3,
                fewshots: Sequence[DesignHistoryEntry] | None = None,
                ) -> DesignReport:
    """Run topology attempts until the spec is met or options run out.

    Writes artifacts under out_dir (created; must not already exist):
    attempt_NN/{strategy.txt,parts.json,trajectory.csv,sized_netlist.sp,
    attempt.json}, plus spec.json, history.json, and report.json at the
    top.  Returns the report; never raises for an infeasible outcome.
    """
    if max_attempts < 1:
        raise PipelineError("max_attempts must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=False)
    _write_json(out / "spec.json", spec_to_dict(spec))

    shots = list(fewshots) if fewshots is not None \
        else seed_fewshots(spec.circuit_class)
    history: list[DesignHistoryEntry] = []
    attempts: list[AttemptOutcome] = []
    tried: set[tuple[str, ...]] = set()
    reason = ""

    def finish(status: str) -> DesignReport:
        if attempts:
            # merit values are normalized per-attempt and not comparable
            # across attempts, so rank by targets missed; on a tie prefer
            # the latest attempt, which saw the most history
            best = max(attempts, key=lambda a: (-len(a.unmet), a.index))
            best_index = best.index
        else:
            best_index = 0
        report = DesignReport(status=status, attempts=tuple(attempts),
                              best_attempt=best_index, reason=reason)
        _write_json(out / "history.json",
                    [_history_record(e) for e in history])
        _write_json(out / "report.json", report.to_dict())
        return report

    for attempt in range(1, max_attempts + 1):
        log.info("attempt %d: requesting strategy", attempt)
        try:
            strategy = request_strategy(spec, shots, provider)
            parts, warnings = _select_parts(strategy, spec, store, provider)
        except (PipelineError, StrategyError) as exc:
            reason = str(exc)
            log.warning("attempt %d aborted: %s", attempt, reason)
            return finish("infeasible")

        topology = tuple(p.entity_id for p in parts)
        if topology in tried:
            reason = (f"strategy proposed an already-tried topology "
                      f"{'+'.join(topology)}; candidates exhausted")
            return finish("infeasible")
        tried.add(topology)

        attempt_dir = out / f"attempt_{attempt:02d}"
        attempt_dir.mkdir()
        (attempt_dir / "strategy.txt").write_text(
            f"ANALYSIS:\n{strategy.rationale}\nSTRATEGY:\n"
            f"{strategy.render()}\n", encoding="utf-8")

        try:
            circuit = assemble(parts, plan_connections(parts))
            selection = store.get_testbenches(required_bench_metrics(spec))
            if selection.missing:
                raise PipelineError(
                    "no testbench measures: " + ", ".join(selection.missing))
            decks = [attach_testbench(circuit, tb)
                     for tb in selection.entities]
        except (AssemblyError, KGError) as exc:
            raise PipelineError(f"attempt {attempt}: {exc}") from exc

        _write_json(attempt_dir / "parts.json", {
            "schema": 1,
            "parts": list(topology),
            "blocks": [b.role for b in strategy.blocks],
            "testbenches": [tb.entity_id for tb in selection.entities],
        })

        space = space_from_netlist(circuit.netlist,
                                   tie_groups=circuit.tie_groups)
        evaluator = DeckEvaluator(decks, backend,
                                  derived=_derived_rules(spec))
        attempt_bo = replace(bo, seed=bo.seed + attempt - 1)
        log.info("attempt %d: sizing %s (%d free parameters)",
                 attempt, "+".join(topology), space.effective_dim)
        try:
            result = run_bo(space, fom_from_spec(spec), evaluator,
                            attempt_bo)
        except (BOError, FoMError, SimbridgeError) as exc:
            raise PipelineError(
                f"attempt {attempt}: sizing failed: {exc}") from exc

        write_trajectory(result, attempt_dir / "trajectory.csv")
        sized = apply_sizing(circuit.netlist, result.best.assignment)
        (attempt_dir / "sized_netlist.sp").write_text(emit(sized),
                                                      encoding="utf-8")

        met, achieved, unmet = _check_spec(spec,
                                           result.best.measurements or {})
        outcome = AttemptOutcome(index=attempt, topology=topology,
                                 strategy=strategy, fom=result.best.fom,
                                 achieved=achieved, unmet=tuple(unmet),
                                 met=met, evaluations=result.evaluations,
                                 warnings=tuple(warnings))
        attempts.append(outcome)
        _write_json(attempt_dir / "attempt.json", outcome.to_dict())

        entry = DesignHistoryEntry(spec=spec, strategy=strategy,
                                   topology="+".join(topology),
                                   achieved=achieved, met=met)
        history.append(entry)

        if met:
            log.info("attempt %d met the specification", attempt)
            return finish("met")
        log.info("attempt %d missed: %s", attempt, "; ".join(unmet))
        if not achieved:
            reason = (f"attempt {attempt} produced no measurements for "
                      "any target; cannot build a regeneration fewshot")
            return finish("infeasible")
        shots.append(build_regeneration_fewshot(entry))

    reason = f"no topology met the specification in {max_attempts} attempts"
    return finish("infeasible")


# ---------------------------------------------------------------------------
# manifest plumbing


@dataclass(frozen=True)
class RunManifest:
    """File-level description of one design run."""

    spec_path: str
    store_path: str
    backend: BackendConfig
    provider: ProviderConfig
    bo: BOConfig
    out_dir: str
    max_attempts: int = 3

    def __post_init__(self):
        if self.max_attempts < 1:
            raise PipelineError("max_attempts must be at least 1")
        for label, path in (("spec", self.spec_path),
                            ("store", self.store_path)):
            if not Path(path).exists():
                raise PipelineError(f"{label} path {path!r} does not exist")


def run_design(manifest: RunManifest, run_id: str) -> tuple[DesignReport,
                                                            Path]:
    """Load everything a manifest names and run the loop under out/run_id."""
    with open(manifest.spec_path, "r", encoding="utf-8") as fh:
        spec = spec_from_dict(json.load(fh))
    store = Store.load(manifest.store_path)
    provider = make_provider(manifest.provider)
    run_dir = Path(manifest.out_dir) / run_id
    report = design_loop(spec, store, provider, manifest.backend,
                         manifest.bo, run_dir,
                         max_attempts=manifest.max_attempts)
    return report, run_dir
