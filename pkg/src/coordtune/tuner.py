"""Grid-search strategies: marginal, alternating (coordinate descent), joint and random.

All four share one evaluator that caches by point key, counts requests, derives a
per-point seed and turns objective failures into worst-score trials. Scores are
minimised.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .grid import HyperparamGrid, HyperparamPoint, parse_key, point_key, point_with
from .seeds import derive_seed

log = logging.getLogger(__name__)

MARGINAL = "marginal"
ALTERNATING = "alternating"
JOINT = "joint"
RANDOM = "random"
METHODS = (MARGINAL, ALTERNATING, JOINT, RANDOM)

REPORT_SCHEMA = "coordtune.report/1"
DEFAULT_JOINT_CAP = 10**6


class SearchError(RuntimeError):
    """Every trial of a step failed."""


class BudgetExceeded(ValueError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"joint grid has {size:,} points, above the cap of {cap:,}")
        self.size = size
        self.cap = cap


@dataclass
class TrialResult:
    point: Any  # HyperparamPoint, or a plain mapping for off-grid evaluations
    key: str
    score: float
    seed: int
    wall_time: float = 0.0
    step_index: int = 0
    axis_swept: str | None = None
    cached: bool = False
    failed: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, timing: bool = False) -> dict:
        point = self.point.to_json() if isinstance(self.point, HyperparamPoint) else dict(self.point)
        doc = {
            "record": "trial",
            "step": self.step_index,
            "axis": self.axis_swept,
            "key": self.key,
            "point": point,
            "score": self.score,
            "seed": self.seed,
            "cached": self.cached,
            "failed": self.failed,
            "diagnostics": self.diagnostics,
        }
        if timing:
            doc["wall_time"] = self.wall_time
        return doc


class Objective(Protocol):
    """``obj(point, base_seed)`` returns a float or an object with ``score`` (and
    optionally ``failed`` / ``diagnostics``). Must be deterministic in its inputs."""

    def __call__(self, point: HyperparamPoint, base_seed: int) -> Any: ...


@dataclass(frozen=True)
class SearchConfig:
    max_steps: int = 5
    base_seed: int = 0
    tie_break: str = "first-index"
    cache_enabled: bool = True
    n_replicates: int = 1
    workers: int = 1
    joint_cap: int = DEFAULT_JOINT_CAP
    failure_score: float = 1.0

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.tie_break != "first-index":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TuneReport:
    method: str
    grid: HyperparamGrid
    init: HyperparamPoint | None
    config: SearchConfig
    trials: list[TrialResult] = field(default_factory=list)
    best_per_step: list[tuple[int, HyperparamPoint, float]] = field(default_factory=list)
    distinct_evaluations: int = 0
    total_requests: int = 0
    converged_at_step: int | None = None
    objective_calls: int = 0

    @property
    def best_point(self) -> HyperparamPoint:
        return self.best_per_step[-1][1]

    @property
    def best_score(self) -> float:
        return self.best_per_step[-1][2]

    @property
    def steps(self) -> int:
        return max((t.step_index for t in self.trials), default=0)

    def sweep(self, step: int, axis: str) -> list[TrialResult]:
        return [t for t in self.trials if t.step_index == step and t.axis_swept == axis]

    def requests_in_step(self, step: int) -> int:
        return sum(1 for t in self.trials if t.step_index == step)

    def distinct_in_step(self, step: int) -> int:
        return len({t.key for t in self.trials if t.step_index == step})

    # ------------------------------------------------------------------ JSONL

    def header(self) -> dict:
        return {
            "record": "header",
            "schema": REPORT_SCHEMA,
            "method": self.method,
            "grid": self.grid.to_json(),
            "init": self.init.to_json() if self.init is not None else None,
            "config": self.config.to_json(),
        }

    def summary(self) -> dict:
        return {
            "record": "summary",
            "best_per_step": [
                {"step": s, "key": p.key, "score": v} for s, p, v in self.best_per_step
            ],
            "distinct_evaluations": self.distinct_evaluations,
            "total_requests": self.total_requests,
            "converged_at_step": self.converged_at_step,
        }

    def jsonl_lines(self, timing: bool = False) -> list[str]:
        dump = lambda d: json.dumps(d, sort_keys=True, allow_nan=False)
        lines = [dump(self.header())]
        lines += [dump(t.to_json(timing)) for t in self.trials]
        lines.append(dump(self.summary()))
        return lines

    def to_jsonl(self, path, timing: bool = False) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.jsonl_lines(timing):
                fh.write(line + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TuneReport":
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records or records[0].get("record") != "header":
            raise ValueError(f"{path}: first record must be the header")
        head = records[0]
        if head.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"{path}: unsupported schema {head.get('schema')!r}")
        grid = HyperparamGrid.from_json(head["grid"])
        init = grid.point(head["init"]) if head.get("init") else None
        report = cls(head["method"], grid, init, SearchConfig(**head["config"]))
        for rec in records[1:]:
            if rec["record"] == "trial":
                report.trials.append(
                    TrialResult(
                        point=parse_key(grid, rec["key"]),
                        key=rec["key"],
                        score=rec["score"],
                        seed=rec["seed"],
                        wall_time=rec.get("wall_time", 0.0),
                        step_index=rec["step"],
                        axis_swept=rec["axis"],
                        cached=rec["cached"],
                        failed=rec["failed"],
                        diagnostics=rec.get("diagnostics", {}),
                    )
                )
            elif rec["record"] == "summary":
                report.best_per_step = [
                    (b["step"], parse_key(grid, b["key"]), b["score"]) for b in rec["best_per_step"]
                ]
                report.distinct_evaluations = rec["distinct_evaluations"]
                report.total_requests = rec["total_requests"]
                report.converged_at_step = rec["converged_at_step"]
        return report


# --------------------------------------------------------------------------- evaluator


class _Evaluator:
    def __init__(self, objective: Callable, cfg: SearchConfig):
        self.objective = objective
        self.cfg = cfg
        self.cache: dict[str, TrialResult] = {}
        self.lock = threading.Lock()
        self.seen: set[str] = set()
        self.requests = 0
        self.calls = 0

    def _run(self, point: HyperparamPoint, key: str) -> TrialResult:
        scores, diags = [], []
        failed = False
        t0 = time.perf_counter()
        for r in range(self.cfg.n_replicates):
            seed = self.cfg.base_seed if r == 0 else derive_seed(self.cfg.base_seed, "replicate", r)
            try:
                out = self.objective(point, seed)
                score = float(getattr(out, "score", out))
                failed_r = bool(getattr(out, "failed", False)) or not math.isfinite(score)
                diag = dict(getattr(out, "diagnostics", {}) or {})
            except Exception as exc:  # a single bad trial must not abort the campaign
                log.warning("objective failed on %s: %r", key, exc)
                failed_r, score, diag = True, self.cfg.failure_score, {"error": repr(exc)}
            if failed_r:
                failed = True
                score = self.cfg.failure_score
            scores.append(score)
            diags.append(diag)
        with self.lock:
            self.calls += self.cfg.n_replicates
        diagnostics = diags[0] if len(diags) == 1 else {"replicates": diags, "replicate_scores": scores}
        return TrialResult(
            point=point,
            key=key,
            score=float(np.mean(scores)) if not failed else self.cfg.failure_score,
            seed=derive_seed(self.cfg.base_seed, key),
            wall_time=time.perf_counter() - t0,
            failed=failed,
            diagnostics=diagnostics,
        )

    def request(self, points: Sequence[HyperparamPoint], step: int, axis: str | None) -> list[TrialResult]:
        """Evaluate ``points`` (cache first); results come back in input order."""
        keys = [point_key(p) for p in points]
        todo: dict[str, HyperparamPoint] = {}
        fresh: dict[int, HyperparamPoint] = {}
        for i, (p, k) in enumerate(zip(points, keys)):
            if self.cfg.cache_enabled:
                if k not in self.cache and k not in todo:
                    todo[k] = p
            else:
                fresh[i] = p

        if self.cfg.cache_enabled:
            jobs = list(todo.items())
        else:
            jobs = [(keys[i], p) for i, p in fresh.items()]
        if self.cfg.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                computed = list(pool.map(lambda kp: self._run(kp[1], kp[0]), jobs))
        else:
            computed = [self._run(p, k) for k, p in jobs]

        out: list[TrialResult] = []
        if self.cfg.cache_enabled:
            new_keys = set()
            for (k, _), res in zip(jobs, computed):
                with self.lock:
                    self.cache.setdefault(k, res)  # insert once
                new_keys.add(k)
            for p, k in zip(points, keys):
                base = self.cache[k]
                cached = k not in new_keys
                new_keys.discard(k)
                out.append(replace(base, point=p, step_index=step, axis_swept=axis, cached=cached,
                                   wall_time=0.0 if cached else base.wall_time))
        else:
            for (k, p), res in zip(jobs, computed):
                out.append(replace(res, step_index=step, axis_swept=axis))
        self.requests += len(points)
        self.seen.update(keys)
        return out


def _check_step(results: Sequence[TrialResult], step: int) -> None:
    if results and all(r.failed for r in results):
        err = results[0].diagnostics.get("error", "objective reported failure")
        raise SearchError(f"all {len(results)} trials of step {step} failed; first error: {err}")


def _finish(report: TuneReport, ev: _Evaluator) -> TuneReport:
    report.distinct_evaluations = len(ev.seen)
    report.total_requests = ev.requests
    report.objective_calls = ev.calls
    return report


# --------------------------------------------------------------------------- methods


def marginal_search(
    grid: HyperparamGrid, init: HyperparamPoint, obj: Callable, cfg: SearchConfig = SearchConfig()
) -> TuneReport:
    """Sweep every axis independently from the step's base point.

    The best point seen in the step (ties: the base, then the first in axis and
    value order) becomes the next base. Stops when two consecutive steps select
    the same point, or after ``cfg.max_steps`` steps.
    """
    base = grid.validate(init)
    report = TuneReport(MARGINAL, grid, base, cfg)
    ev = _Evaluator(obj, cfg)
    previous = None
    for step in range(1, cfg.max_steps + 1):
        step_results = []
        base_key = point_key(base)
        best_point, best_score = None, math.inf
        for axis in grid.axes:
            pts = [point_with(base, axis.id, v) for v in axis.values]
            results = ev.request(pts, step, axis.id)
            report.trials.extend(results)
            step_results.extend(results)
            for r in results:
                if r.key == base_key and best_point is None:
                    best_point, best_score = r.point, r.score
        _check_step(step_results, step)
        for r in step_results:
            if r.score < best_score:
                best_point, best_score = r.point, r.score
        report.best_per_step.append((step, best_point, best_score))
        log.info("marginal step %d: %s -> %.6g", step, best_point, best_score)
        if previous is not None and best_point == previous:
            report.converged_at_step = step
            break
        previous = best_point
        base = best_point
    return _finish(report, ev)


def alternating_search(
    grid: HyperparamGrid, init: HyperparamPoint, obj: Callable, cfg: SearchConfig = SearchConfig()
) -> TuneReport:
    """Coordinate descent over the axes in grid order.

    Each axis sweep moves the current point to the best value on that axis
    (ties keep the current value, then the lowest index). A pass that changes
    nothing ends the search.
    """
    current = grid.validate(init)
    report = TuneReport(ALTERNATING, grid, current, cfg)
    ev = _Evaluator(obj, cfg)
    score = math.nan
    for step in range(1, cfg.max_steps + 1):
        start = current
        step_results = []
        for axis in grid.axes:
            pts = [point_with(current, axis.id, v) for v in axis.values]
            results = ev.request(pts, step, axis.id)
            report.trials.extend(results)
            step_results.extend(results)
            inc = axis.values.index(current[axis.id])
            best = results[inc]
            for r in results:
                if r.score < best.score:
                    best = r
            current, score = best.point, best.score
        _check_step(step_results, step)
        report.best_per_step.append((step, current, score))
        log.info("alternating pass %d: %s -> %.6g", step, current, score)
        if current == start:
            report.converged_at_step = step
            break
    return _finish(report, ev)


def joint_search(grid: HyperparamGrid, obj: Callable, cfg: SearchConfig = SearchConfig()) -> TuneReport:
    """Exhaustive evaluation of the Cartesian product in lexicographic order."""
    if grid.size > cfg.joint_cap:
        raise BudgetExceeded(grid.size, cfg.joint_cap)
    report = TuneReport(JOINT, grid, None, cfg)
    ev = _Evaluator(obj, cfg)
    points = list(grid.points())
    chunk = max(cfg.workers * 4, 64)
    best: TrialResult | None = None
    for start in range(0, len(points), chunk):
        results = ev.request(points[start : start + chunk], 1, None)
        report.trials.extend(results)
        for r in results:
            if best is None or r.score < best.score:
                best = r
    _check_step(report.trials, 1)
    report.best_per_step.append((1, best.point, best.score))
    return _finish(report, ev)


def random_search(
    grid: HyperparamGrid, obj: Callable, cfg: SearchConfig = SearchConfig(), n_trials: int = 20
) -> TuneReport:
    """``n_trials`` uniform draws with replacement; the draw stream is seeded from ``base_seed``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(derive_seed(cfg.base_seed, "random-search"))
    lengths = [len(a) for a in grid.axes]
    points = [grid.at([int(rng.integers(0, n)) for n in lengths]) for _ in range(n_trials)]
    report = TuneReport(RANDOM, grid, None, cfg)
    ev = _Evaluator(obj, cfg)
    best: TrialResult | None = None
    for i, p in enumerate(points, start=1):
        (r,) = ev.request([p], i, None)
        report.trials.append(r)
        if best is None or r.score < best.score:
            best = r
        report.best_per_step.append((i, best.point, best.score))
    _check_step(report.trials, 1)
    return _finish(report, ev)


def run_method(
    method: str,
    grid: HyperparamGrid,
    init: HyperparamPoint | None,
    obj: Callable,
    cfg: SearchConfig,
    n_trials: int = 20,
) -> TuneReport:
    if method == MARGINAL:
        return marginal_search(grid, init, obj, cfg)
    if method == ALTERNATING:
        return alternating_search(grid, init, obj, cfg)
    if method == JOINT:
        return joint_search(grid, obj, cfg)
    if method == RANDOM:
        return random_search(grid, obj, cfg, n_trials)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
