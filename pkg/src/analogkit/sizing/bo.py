"""Sizing loop: quasi-random initialization, then propose/evaluate/refit.

The loop maximizes the figure of merit over a tied parameter space:

    1. draw n_init scrambled-Sobol points and evaluate them,
    2. estimate metric norms from those samples (unless preset),
    3. fit a GP to the merit values (inputs on the unit cube, outputs
       standardized),
    4. repeat n_iter times: propose the EI argmax, evaluate, refit.

Every evaluator call is counted; n_init + n_iter calls are made, never
more, and the total must stay within the configured budget.  Failed
evaluations are recorded with a penalty merit and kept out of the GP.
All randomness derives from the seed plus the evaluation index, so a run
can resume from a snapshot and still produce the identical trajectory.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .acquisition import propose_next
from .fom import FoMConfig, FoMError, compute_fom, estimate_norms
from .gp import Hyperparams, gp_fit, median_heuristic
from .space import ParameterSpace, SpaceError

SNAPSHOT_SCHEMA = 1


class BOError(Exception):
    pass


@dataclass(frozen=True)
class BOConfig:
    n_init: int = 100
    n_iter: int = 400
    budget: int = 2000
    seed: int = 0
    candidates: int = 256
    refine: bool = True
    hyper_mode: str = "mll"  # "fixed" | "heuristic" | "mll"
    hyper: Hyperparams | None = None
    mll_every: int = 50
    noise_var: float = 1e-6
    failure_fom: float = -1e9
    snapshot_path: str | None = None
    snapshot_every: int = 0

    def __post_init__(self):
        if self.n_init < 2:
            raise BOError("n_init must be at least 2")
        if self.n_iter < 0:
            raise BOError("n_iter must be non-negative")
        if self.n_init + self.n_iter > self.budget:
            raise BOError(f"n_init + n_iter = {self.n_init + self.n_iter} "
                          f"exceeds budget {self.budget}")
        if self.hyper_mode not in ("fixed", "heuristic", "mll"):
            raise BOError(f"unknown hyper_mode {self.hyper_mode!r}")
        if self.hyper_mode == "fixed" and self.hyper is None:
            raise BOError("hyper_mode 'fixed' needs hyperparameters")


@dataclass(frozen=True)
class EvaluationRecord:
    index: int
    reduced: tuple[float, ...]
    assignment: dict[str, float]
    status: str
    measurements: dict[str, float] | None
    fom: float
    wall_time: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class BOResult:
    records: tuple[EvaluationRecord, ...]
    best: EvaluationRecord
    fom_config: FoMConfig
    evaluations: int

    def trajectory(self) -> list[float]:
        """Best-so-far merit after each evaluation (monotone)."""
        out, best = [], -np.inf
        for r in self.records:
            if r.status == "ok":
                best = max(best, r.fom)
            out.append(best)
        return out


def _derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed,
                                      spawn_key=(index,)).generate_state(1)[0])


def _call_evaluator(evaluator: Callable, assignment: Mapping[str, float]):
    """Normalize evaluator output to (status, values, detail)."""
    outcome = evaluator(dict(assignment))
    if isinstance(outcome, Mapping):
        return "ok", dict(outcome), ""
    status = getattr(outcome, "status", None)
    values = getattr(outcome, "values", None)
    detail = getattr(outcome, "detail", "")
    if status not in ("ok", "failed") or not isinstance(values, (dict, type(None))):
        raise BOError(f"evaluator returned unusable outcome {outcome!r}")
    return status, dict(values or {}), detail


def run_bo(space: ParameterSpace, fom_config: FoMConfig,
           evaluator: Callable[[dict], object], config: BOConfig,
           resume_from: str | None = None) -> BOResult:
    """Run the loop and return all records plus the best one."""
    d = space.effective_dim
    records: list[EvaluationRecord] = []
    resumed_hyper: Hyperparams | None = None
    if resume_from is not None:
        records, resumed_hyper = load_snapshot(resume_from, space)

    calls = 0

    def evaluate(index: int, reduced: Sequence[float]) -> EvaluationRecord:
        nonlocal calls
        assignment = space.expand(reduced)
        start = time.perf_counter()
        status, values, _detail = _call_evaluator(evaluator, assignment)
        elapsed = time.perf_counter() - start
        calls += 1
        return EvaluationRecord(index=index, reduced=tuple(reduced),
                                assignment=assignment, status=status,
                                measurements=values if status == "ok" else None,
                                fom=np.nan, wall_time=elapsed)

    # -- initialization ----------------------------------------------------
    init_points = space.sample(config.n_init, config.seed)
    for i in range(len(records), config.n_init):
        records.append(evaluate(i, init_points[i]))

    ok_values = [r.measurements for r in records[:config.n_init]
                 if r.status == "ok"]
    if not fom_config.has_norms:
        if len(ok_values) < 2:
            raise BOError("cannot estimate norms: fewer than two successful "
                          "initial evaluations")
        fom_config = estimate_norms(fom_config, ok_values)

    def scored(r: EvaluationRecord) -> EvaluationRecord:
        if not np.isnan(r.fom):
            return r
        if r.status != "ok":
            return _with_fom(r, config.failure_fom, "failed")
        try:
            return _with_fom(r, compute_fom(fom_config, r.measurements), "ok")
        except FoMError:
            return _with_fom(r, config.failure_fom, "failed")

    records = [scored(r) for r in records]

    # -- iterations --------------------------------------------------------
    hyper: Hyperparams | None = config.hyper or resumed_hyper
    start_iter = max(0, len(records) - config.n_init)
    for t in range(start_iter, config.n_iter):
        X, y = _training_set(records, space)
        if len(X) < 2:
            raise BOError("cannot fit surrogate: fewer than two successful "
                          "evaluations")
        y_mean, y_std = float(np.mean(y)), float(np.std(y)) or 1.0
        ys = (y - y_mean) / y_std
        if config.hyper_mode == "heuristic" or hyper is None:
            hyper = median_heuristic(X, ys, config.noise_var)
        # the refit schedule depends on the absolute iteration number, not
        # on where a resumed run picked up, so trajectories replay exactly
        optimize = (config.hyper_mode == "mll"
                    and (t == 0 or
                         (config.mll_every > 0 and t % config.mll_every == 0)))
        model = gp_fit(X, ys, hyper=hyper, optimize=optimize)
        hyper = model.hyper
        best_std = float(np.max(ys))
        z = propose_next(model, best_std,
                         seed=_derived_seed(config.seed, len(records)),
                         candidates=config.candidates, refine=config.refine,
                         exclude=X)
        reduced = space.from_unit(z)
        reduced = _dedupe(reduced, records, space)
        records.append(scored(evaluate(len(records), reduced)))
        if config.snapshot_path and config.snapshot_every > 0 \
                and (t + 1) % config.snapshot_every == 0:
            save_snapshot(config.snapshot_path, records, hyper)

    if resume_from is None and calls != config.n_init + config.n_iter:
        raise BOError(f"internal accounting error: {calls} evaluator calls "
                      f"for n_init={config.n_init}, n_iter={config.n_iter}")

    if config.snapshot_path:
        save_snapshot(config.snapshot_path, records, hyper)

    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise BOError("every evaluation failed; nothing to report")
    best = max(ok, key=lambda r: (r.fom, -r.index))
    return BOResult(records=tuple(records), best=best,
                    fom_config=fom_config, evaluations=len(records))


def _with_fom(r: EvaluationRecord, fom: float, status: str) -> EvaluationRecord:
    return EvaluationRecord(index=r.index, reduced=r.reduced,
                            assignment=r.assignment, status=status,
                            measurements=r.measurements, fom=float(fom),
                            wall_time=r.wall_time)


def _training_set(records: Sequence[EvaluationRecord],
                  space: ParameterSpace):
    """Unit-cube inputs and merit outputs, duplicate rows collapsed."""
    seen: dict[tuple, int] = {}
    rows, ys = [], []
    for r in records:
        if r.status != "ok":
            continue
        key = r.reduced
        if key in seen:
            if r.fom > ys[seen[key]]:
                ys[seen[key]] = r.fom
            continue
        seen[key] = len(rows)
        rows.append(space.to_unit(r.reduced))
        ys.append(r.fom)
    return np.array(rows, dtype=float), np.array(ys, dtype=float)


def _dedupe(reduced: Sequence[float], records: Sequence[EvaluationRecord],
            space: ParameterSpace) -> list[float]:
    """Avoid exact re-evaluation of an already-visited point."""
    seen = {r.reduced for r in records}
    cand = list(reduced)
    if tuple(cand) not in seen:
        return cand
    z = space.to_unit(cand)
    for k in range(1, 64):
        bumped = space.from_unit(np.clip(z + k / 1024.0, 0.0, 1.0))
        if tuple(bumped) not in seen:
            return bumped
    return cand


# ---------------------------------------------------------------------------
# snapshots and trajectories

def save_snapshot(path, records: Sequence[EvaluationRecord],
                  hyper: Hyperparams | None = None) -> None:
    payload = {
        "schema": SNAPSHOT_SCHEMA,
        "hyper": None if hyper is None else {
            "lengthscales": list(hyper.lengthscales),
            "signal_var": hyper.signal_var,
            "noise_var": hyper.noise_var},
        "records": [
            {"index": r.index, "reduced": list(r.reduced),
             "status": r.status, "measurements": r.measurements,
             "fom": None if np.isnan(r.fom) else r.fom}
            for r in records],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n",
                          encoding="utf-8")


def load_snapshot(path, space: ParameterSpace):
    """Load records plus the surrogate hyperparameters in force."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BOError(f"cannot read snapshot {path}: {exc}") from None
    if payload.get("schema") != SNAPSHOT_SCHEMA:
        raise BOError(f"{path}: unsupported snapshot schema")
    out = []
    for rec in payload["records"]:
        reduced = tuple(float(v) for v in rec["reduced"])
        if len(reduced) != space.effective_dim:
            raise BOError(f"{path}: snapshot dimensionality does not match "
                          "the space")
        out.append(EvaluationRecord(
            index=int(rec["index"]), reduced=reduced,
            assignment=space.expand(reduced), status=rec["status"],
            measurements=rec["measurements"],
            fom=np.nan if rec["fom"] is None else float(rec["fom"])))
    h = payload.get("hyper")
    hyper = None
    if h is not None:
        hyper = Hyperparams(tuple(h["lengthscales"]), h["signal_var"],
                            h["noise_var"])
    return out, hyper


def write_trajectory(result: BOResult, path) -> None:
    """Deterministic CSV: index, status, merit, best-so-far, metrics."""
    metric_names = sorted({m for r in result.records
                           if r.measurements for m in r.measurements})
    lines = ["index,status,fom,best_fom," + ",".join(metric_names)]
    best = -np.inf
    for r in result.records:
        if r.status == "ok":
            best = max(best, r.fom)
        cells = [str(r.index), r.status,
                 repr(r.fom) if r.status == "ok" else "",
                 repr(best) if np.isfinite(best) else ""]
        for m in metric_names:
            v = (r.measurements or {}).get(m)
            cells.append("" if v is None else repr(float(v)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
