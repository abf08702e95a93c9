"""Bounded derivative-free minimization and grid sweeps.

Nelder-Mead (scipy) runs in an unconstrained space obtained by a logistic
transform of each bounded parameter (linear or logarithmic scale); periodic
phases are embedded on the unit circle as (cos, sin) so optima can wrap.
Multi-start points come from a scrambled Sobol sequence with a fixed seed,
so identical configurations reproduce identical traces.  Evaluations that
raise a physics error (instability, degenerate loop, protocol failure)
enter the trace as infeasible with a large sentinel value; they never
abort the search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize
from scipy.stats import qmc

from .errors import (
    DegenerateLoopError,
    InfeasibleError,
    MarginalStabilityError,
    ParameterError,
    ProtocolError,
    QuadratureError,
    UnstableModelError,
)

BIG = 1e30
_CATCH = (
    UnstableModelError,
    DegenerateLoopError,
    MarginalStabilityError,
    ProtocolError,
    QuadratureError,
    ParameterError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


@dataclass(frozen=True)
class FreeParam:
    """One optimization parameter with bounds and a sampling scale."""

    name: str
    lo: float = 0.0
    hi: float = 1.0
    scale: str = "lin"  # "lin", "log" or "circular"

    def __post_init__(self):
        if self.scale not in ("lin", "log", "circular"):
            raise ParameterError(f"unknown scale '{self.scale}'")
        if self.scale == "log" and (self.lo <= 0 or self.hi <= self.lo):
            raise ParameterError("log scale needs 0 < lo < hi")
        if self.scale == "lin" and not self.hi > self.lo:
            raise ParameterError("lin scale needs hi > lo")

    @property
    def n_coords(self) -> int:
        return 2 if self.scale == "circular" else 1


@dataclass(frozen=True)
class OptProblem:
    """Objective plus free-parameter layout and search settings."""

    objective: object  # callable dict -> float
    free: tuple[FreeParam, ...]
    starts: int = 16
    seed: int = 0
    xatol: float = 1e-4
    ftol_rel: float = 1e-6
    max_evals_per_start: int | None = None
    warm_starts: tuple = ()  # additional starting dicts


@dataclass
class OptResult:
    best_params: dict
    best_value: float
    feasible: bool
    n_eval: int
    trace: list = field(default_factory=list)


def _to_physical(z: np.ndarray, free) -> dict:
    """Map unconstrained coordinates to parameter values."""
    out = {}
    k = 0
    for p in free:
        if p.scale == "circular":
            out[p.name] = float(np.arctan2(z[k + 1], z[k]))
            k += 2
            continue
        u = 1.0 / (1.0 + np.exp(-np.clip(z[k], -500.0, 500.0)))  # logistic into (0, 1)
        if p.scale == "log":
            out[p.name] = float(np.exp(np.log(p.lo) + u * (np.log(p.hi) - np.log(p.lo))))
        else:
            out[p.name] = float(p.lo + u * (p.hi - p.lo))
        k += 1
    return out


def _unit_to_z(u01: np.ndarray, free) -> np.ndarray:
    """Map a point of the unit hypercube to the unconstrained space."""
    z = []
    k = 0
    for p in free:
        if p.scale == "circular":
            theta = 2.0 * np.pi * u01[k]
            z.extend([np.cos(theta), np.sin(theta)])
            k += 1
        else:
            u = np.clip(u01[k], 1e-4, 1.0 - 1e-4)
            z.append(np.log(u / (1.0 - u)))
            k += 1
    return np.asarray(z)


def _params_to_z(params: dict, free) -> np.ndarray:
    z = []
    for p in free:
        x = params[p.name]
        if p.scale == "circular":
            z.extend([np.cos(x), np.sin(x)])
            continue
        if p.scale == "log":
            u = (np.log(x) - np.log(p.lo)) / (np.log(p.hi) - np.log(p.lo))
        else:
            u = (x - p.lo) / (p.hi - p.lo)
        u = np.clip(u, 1e-4, 1.0 - 1e-4)
        z.append(np.log(u / (1.0 - u)))
    return np.asarray(z)


def minimize(problem: OptProblem) -> OptResult:
    """Multi-start bounded Nelder-Mead over the problem's free parameters.

    Returns the best feasible point, its value, and the complete evaluation
    trace (in evaluation order).  Raises InfeasibleError when every start
    failed to produce a single finite objective value.
    """
    free = problem.free
    dim_u = len(free)
    trace: list = []
    failures: list = []
    n_eval = [0]

    def wrapped(z):
        params = _to_physical(np.asarray(z), free)
        n_eval[0] += 1
        try:
            val = float(problem.objective(params))
            feasible = np.isfinite(val)
            if not feasible:
                val = BIG
        except _CATCH as exc:
            failures.append(f"{type(exc).__name__}: {exc}")
            val, feasible = BIG, False
        trace.append({"eval": n_eval[0], **params, "value": val, "feasible": feasible})
        return val

    sob = qmc.Sobol(d=dim_u, scramble=True, seed=problem.seed)
    n_starts = max(problem.starts, 1)
    n_draw = 1 << int(np.ceil(np.log2(n_starts)))  # Sobol wants powers of two
    starts = [_unit_to_z(u, free) for u in sob.random(n_draw)[:n_starts]]
    starts = [_params_to_z(w, free) for w in problem.warm_starts] + starts

    maxfev = problem.max_evals_per_start or 400 * sum(p.n_coords for p in free)
    best_val, best_z = np.inf, None
    for z0 in starts:
        f0 = wrapped(z0)
        fatol = problem.ftol_rel * max(abs(f0 if f0 < BIG else 1.0), 1e-12)
        res = scipy_minimize(
            wrapped,
            z0,
            method="Nelder-Mead",
            options={
                "xatol": problem.xatol,
                "fatol": fatol,
                "maxfev": maxfev,
                "initial_simplex": _initial_simplex(z0),
            },
        )
        if res.fun < best_val:
            best_val, best_z = res.fun, res.x

    if best_z is None or best_val >= BIG:
        raise InfeasibleError(
            "all optimizer starts were infeasible; diagnostics: "
            + "; ".join(sorted(set(failures))[:8])
        )
    return OptResult(
        best_params=_to_physical(best_z, free),
        best_value=float(best_val),
        feasible=True,
        n_eval=n_eval[0],
        trace=trace,
    )


def _initial_simplex(z0: np.ndarray) -> np.ndarray:
    n = len(z0)
    simplex = np.tile(z0, (n + 1, 1))
    for j in range(n):
        simplex[j + 1, j] += 0.35 if z0[j] <= 0 else -0.35
    return simplex


def sweep(values, evaluate, labels=None) -> list[dict]:
    """Evaluate a callable over a grid, capturing per-point failures.

    ``evaluate`` maps one grid value to a result dict; exceptions from the
    physics layer are recorded as failed points and never abort the sweep.
    Records come back in grid order.
    """
    records = []
    for i, v in enumerate(values):
        rec = {"index": i, "value": v}
        if labels is not None:
            rec["label"] = labels[i]
        try:
            rec.update(evaluate(v))
            rec["ok"] = True
            rec["error"] = ""
        except _CATCH as exc:
            rec["ok"] = False
            rec["error"] = f"{type(exc).__name__}: {exc}"
        except InfeasibleError as exc:
            rec["ok"] = False
            rec["error"] = f"InfeasibleError: {exc}"
        records.append(rec)
    return records


# spec'd search ranges for the physical feedback parameters
def default_bounds(omega_m: float) -> dict[str, FreeParam]:
    two_pi = 2.0 * np.pi
    return {
        "phi_s": FreeParam("phi_s", -np.pi, np.pi, "circular"),
        "delta_a": FreeParam("delta_a", -10.0 * omega_m, 10.0 * omega_m, "lin"),
        "kappa1": FreeParam("kappa1", two_pi * 10e3, two_pi * 20e6, "log"),
        "kappa2": FreeParam("kappa2", two_pi * 10e3, two_pi * 5e6, "log"),
        "tau_s": FreeParam("tau_s", 0.0, 1e-6, "lin"),
        "gamma_tm": FreeParam("gamma_tm", 1e2, 1e7, "log"),
        "tau_p": FreeParam("tau_p", 1e-6, 1e-2, "log"),
    }
