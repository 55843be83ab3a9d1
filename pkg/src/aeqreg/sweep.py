"""Grid sweeps and budgeted derivative-free minimisation over task parameters."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__
from .config import detection_inputs, gate_inputs
from .detection import detection_error
from .gate import GateEngine

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SweepSpec:
    task: str
    axes: tuple[tuple[str, tuple], ...]
    fixed: dict = field(default_factory=dict)
    N_target: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("detection", "gate"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.axes:
            raise ValueError("a sweep needs at least one axis")
        for path, values in self.axes:
            if not values:
                raise ValueError(f"axis {path!r} has no values")

    @classmethod
    def from_config(cls, block: dict, seed: int = 0) -> "SweepSpec":
        return cls(
            task=block["task"],
            axes=tuple((ax["path"], tuple(ax["values"])) for ax in block["axes"]),
            fixed=dict(block.get("fixed", {})),
            N_target=float(block.get("N_target", 100.0)),
            seed=seed,
        )

    def to_config(self) -> dict:
        return {
            "task": self.task,
            "axes": [{"path": p, "values": list(v)} for p, v in self.axes],
            "fixed": dict(self.fixed),
            "N_target": self.N_target,
        }

    def config_hash(self) -> str:
        blob = json.dumps({**self.to_config(), "seed": self.seed}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultTable:
    """Rows in lexicographic axis order; each row holds the point, its scalars and any error."""

    axes: tuple[str, ...]
    rows: list[dict]
    meta: dict

    @property
    def columns(self) -> list[str]:
        cols = list(self.axes)
        for row in self.rows:
            for k in row["result"]:
                if k not in cols:
                    cols.append(k)
        return cols + ["error"]

    def flat_rows(self) -> list[dict]:
        return [{**row["point"], **row["result"], "error": row["error"] or ""} for row in self.rows]

    def column(self, name: str) -> list:
        return [row["result"].get(name, math.nan) for row in self.rows]


def evaluate_point(task: str, params: dict, N_target: float = 100.0,
                   overrides: dict | None = None) -> dict:
    """Run one task at boundary-unit ``params``; returns report scalars."""
    if task == "detection":
        p = {"N_target": N_target, **params}
        space, species, cfg, nt = detection_inputs(p, overrides)
        rep = detection_error(space, species, cfg, nt)
        return {"p": rep.p, "N": rep.N, "tau_us": rep.tau * 1e6, "Fbar": rep.Fbar}
    if task == "gate":
        tw, sched = gate_inputs(params)
        rep = GateEngine(tw).report(sched)
        return {"epsilon": rep.infidelity, "leakage": rep.leakage}
    raise ValueError(f"unknown task {task!r}")


def _point_job(args):
    task, point, n_target, overrides = args
    try:
        return evaluate_point(task, point, n_target, overrides), None
    except Exception as exc:  # noqa: BLE001 - per-row failures are data
        return {}, f"{type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec, workers: int = 1, overrides: dict | None = None) -> ResultTable:
    """Evaluate every grid point; failures are recorded in the row, not raised."""
    names = [p for p, _ in spec.axes]
    grid = list(itertools.product(*(values for _, values in spec.axes)))
    jobs = [(spec.task, {**spec.fixed, **dict(zip(names, combo))}, spec.N_target, overrides)
            for combo in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_job, jobs))
    else:
        results = [_point_job(j) for j in jobs]
    rows = [{"point": dict(zip(names, combo)), "result": res, "error": err}
            for combo, (res, err) in zip(grid, results)]
    meta = {"config_hash": spec.config_hash(), "seed": spec.seed, "version": __version__,
            "task": spec.task, "fixed": spec.fixed, "N_target": spec.N_target}
    return ResultTable(tuple(names), rows, meta)


# ---------------------------------------------------------------- minimiser


@dataclass
class OptimizeResult:
    x: dict
    fun: float
    n_evals: int
    exhausted: bool
    history: list = field(default_factory=list)


class _Budget(Exception):
    pass


class _Objective:
    def __init__(self, f, budget):
        self.f, self.budget = f, budget
        self.history = []
        self.best_x, self.best_f = None, math.inf

    def __call__(self, x: dict) -> float:
        if len(self.history) >= self.budget:
            raise _Budget
        try:
            val = float(self.f(dict(x)))
            if math.isnan(val):
                val = math.inf
        except Exception:  # noqa: BLE001 - failed points just lose
            val = math.inf
        self.history.append((dict(x), val))
        if val < self.best_f:
            self.best_x, self.best_f = dict(x), val
        return val


def _golden_line(obj, x, key, lo, hi, f_x, max_evals, xtol):
    """Golden-section search along ``key``; keeps ``x`` if nothing better turns up."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = obj({**x, key: c})
    fd = obj({**x, key: d})
    used = 2
    while used < max_evals and (b - a) > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = obj({**x, key: c})
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = obj({**x, key: d})
        used += 1
    best_k, best_f = (c, fc) if fc <= fd else (d, fd)
    if best_f < f_x:
        return {**x, key: best_k}, best_f
    return x, f_x


def minimize(f, bounds: dict, budget: int = 40, x0: dict | None = None,
             xtol: float = 1e-4, ftol: float = 1e-12) -> OptimizeResult:
    """Cyclic coordinate descent with golden-section line searches.

    Coordinates are visited in the order of ``bounds``. The result is the best
    point ever evaluated; nothing is claimed about global optimality.
    """
    if budget < 10:
        raise ValueError("budget must be at least 10 evaluations")
    for k, (lo, hi) in bounds.items():
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"bad bounds for {k!r}: {(lo, hi)}")
    obj = _Objective(f, budget)
    keys = list(bounds)
    x = dict(x0) if x0 else {k: 0.5 * (lo + hi) for k, (lo, hi) in bounds.items()}
    per_line = max(4, budget // (2 * len(keys)))
    exhausted = False
    try:
        fx = obj(x)
        while True:
            f_start = fx
            for k in keys:
                lo, hi = bounds[k]
                x, fx = _golden_line(obj, x, k, lo, hi, fx, per_line, xtol * (hi - lo))
            if not f_start - fx > ftol:
                break
    except _Budget:
        exhausted = True
    if obj.best_x is None or not math.isfinite(obj.best_f):
        raise RuntimeError("every objective evaluation failed")
    return OptimizeResult(obj.best_x, obj.best_f, len(obj.history), exhausted, obj.history)


def minimize_error(task: str, bounds: dict, budget: int = 40, fixed: dict | None = None,
                   N_target: float = 100.0, objective: str | None = None,
                   overrides: dict | None = None) -> tuple[OptimizeResult, dict]:
    """Minimise detection error ``p`` (or gate ``epsilon``) over boundary-unit ``bounds``.

    Returns the optimiser result and the full report scalars at the best point.
    """
    objective = objective or ("p" if task == "detection" else "epsilon")
    fixed = dict(fixed or {})

    def f(x):
        return evaluate_point(task, {**fixed, **x}, N_target, overrides)[objective]

    res = minimize(f, bounds, budget)
    return res, evaluate_point(task, {**fixed, **res.x}, N_target, overrides)
