"""One-parameter sweeps and value-surface export.

Preset configurations reproduce the keep-alive cost study (five queues,
buffer 4), the delay cost study (five queues, buffer 6) and the full value
surface (buffer 6).  Parameters the studies do not pin down are fixed
here and written into every sweep's metadata.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import count_rejecting_states, long_run_metrics, stationary_distribution
from .cost_model import ConfigError, ModelParams
from .solver import ConvergenceError, value_iteration

SWEEPABLE = {"kappa": "kappa", "h": "h", "beta": "beta", "psi": "psi", "f": "f", "r": "r",
             "lambda": "lam", "gamma": "gamma"}

DELAY_ETA = (1.0, 1.8, 2.5, 3.5, 4.5, 5.5)


def keepalive_params(kappa: float = 1.0) -> ModelParams:
    """Keep-alive cost study; the delay cost is made negligible (h = 0.001, linear)."""
    return ModelParams(lam=4.0, n=5, B=4, mu=1.0, r=0.0, f=10.0, beta=0.0, psi=0.0,
                       kappa=kappa, h=0.001, eta=None, gamma=0.05)


def delay_params(h: float = 1.0) -> ModelParams:
    """Delay cost study.

    Build and destroy costs are set high relative to the keep-alive cost:
    with free build/destroy an empty queue is always retired, so the study's
    all-queues-active regime cannot occur.
    """
    return ModelParams(lam=4.75, n=5, B=6, mu=1.0, r=0.0, f=10.0, beta=5.0, psi=5.0,
                       kappa=1.0, h=h, eta=DELAY_ETA, gamma=0.05)


def surface_params() -> ModelParams:
    """Value surface with B = 6: delay-study rates with free build/destroy."""
    return delay_params(h=1.0).replace(beta=0.0, psi=0.0)


@dataclass
class SweepSpec:
    parameter: str
    values: list
    base: ModelParams
    reference_state: tuple | None = None
    tol: float = 1e-9
    max_iters: int = 200_000
    warm_start: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.parameter!r}; choose from {sorted(SWEEPABLE)}")
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise ConfigError("sweep has no values")
        if self.reference_state is None:
            self.reference_state = (-1,) * self.base.n
        self.reference_state = tuple(self.reference_state)
        self.base.space.encode(self.reference_state)
        for v in self.values:
            self.params_at(v)

    def params_at(self, value: float) -> ModelParams:
        return self.base.replace(**{SWEEPABLE[self.parameter]: value})

    @classmethod
    def from_section(cls, section: dict, base: ModelParams, solver: dict | None = None) -> "SweepSpec":
        section = dict(section)
        if "parameter" not in section:
            raise ConfigError("sweep section needs 'parameter'")
        if "values" in section:
            values = section["values"]
        elif {"start", "stop", "steps"} <= set(section):
            values = grid(section["start"], section["stop"], section["steps"])
        else:
            raise ConfigError("sweep section needs 'values' or 'start'/'stop'/'steps'")
        solver = solver or {}
        return cls(section["parameter"], values, base, section.get("reference_state"),
                   tol=solver.get("tol", 1e-9), max_iters=solver.get("max_iters", 200_000),
                   warm_start=bool(section.get("warm_start", False)))


def grid(start: float, stop: float, steps: int) -> list:
    """``steps`` equal intervals from start to stop (``steps + 1`` points)."""
    return np.linspace(start, stop, int(steps) + 1).tolist()


def keepalive_sweep() -> SweepSpec:
    return SweepSpec("kappa", grid(0.0, 20.0, 80), keepalive_params(), metadata={
        "study": "keep-alive cost", "lambda_note": "lambda=4 here, 4.75 in the delay cost study"})


def delay_sweep() -> SweepSpec:
    return SweepSpec("h", grid(0.0, 5.0, 50), delay_params(), metadata={
        "study": "delay cost", "lambda_note": "lambda=4.75 here, 4 in the keep-alive cost study"})


@dataclass
class SweepRow:
    value: float
    avg_active_queues: float
    avg_total_tasks: float
    rejecting_states: int
    reference_value: float
    iterations: int
    residual: float
    converged: bool = True


def run_point(spec: SweepSpec, value: float, v0=None):
    params = spec.params_at(value)
    try:
        res = value_iteration(params, spec.tol, spec.max_iters, v0=v0)
    except ConvergenceError as exc:
        nan = float("nan")
        residual = exc.history[-1] if exc.history else nan
        return SweepRow(value, nan, nan, -1, nan, spec.max_iters, residual, False), None
    dist = stationary_distribution(res.policy, params)
    active, tasks = long_run_metrics(dist, params.space)
    ref = float(res.values[params.space.encode(spec.reference_state)])
    row = SweepRow(value, active, tasks, count_rejecting_states(res.policy), ref,
                   res.iterations, res.residual)
    return row, res.values


def run_sweep(spec: SweepSpec, progress=None) -> list[SweepRow]:
    """Solve every point of the sweep; rows come back ordered by swept value."""
    rows = []
    V = None
    for value in sorted(spec.values):
        row, values = run_point(spec, value, V if spec.warm_start else None)
        if values is not None:
            V = values
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(x)
    return f"{x:.12g}"


def write_sweep_csv(fh, rows, parameter: str = "value") -> None:
    writer = csv.writer(fh, lineterminator="\n")
    names = [f.name for f in SweepRow.__dataclass_fields__.values()]
    writer.writerow([parameter if n == "value" else n for n in names])
    for row in rows:
        writer.writerow([_fmt(getattr(row, n)) for n in names])


def sweep_metadata(spec: SweepSpec) -> dict:
    return {"parameter": spec.parameter, "values": spec.values, "base": spec.base.to_dict(),
            "reference_state": list(spec.reference_state), "tol": spec.tol,
            "max_iters": spec.max_iters, "warm_start": spec.warm_start,
            "stationary_start": "all-inactive", **spec.metadata}


def write_sweep_metadata(fh, spec: SweepSpec) -> None:
    json.dump(sweep_metadata(spec), fh, indent=2, sort_keys=True)
    fh.write("\n")


def export_value_surface(V, space, fh) -> None:
    """Value of every state in index order (queue 0 most significant)."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["index", *[f"q{i + 1}" for i in range(space.n)], "value"])
    for s, levels in enumerate(space.levels.tolist()):
        writer.writerow([s, *levels, f"{V[s]:.12g}"])


def block_means(V, space, depth: int = 1) -> np.ndarray:
    """Mean value over states sharing the levels of the first ``depth`` queues."""
    g = space.grid(V)
    return g.mean(axis=tuple(range(depth, space.n))) if depth < space.n else g


def rows_to_dicts(rows) -> list[dict]:
    return [asdict(r) for r in rows]
