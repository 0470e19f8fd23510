"""Computable deterministic error bound on a finite-approximation measure.

|E_pi g - E_pi^(r) g| <= (ybar a' / 2^(r-2)) * V(g) * e,  e = max_s 1 / z*_s,

where z*_s is the optimum of a small LP built from the cumulative row sums
of the (upper-scheme) transition matrix.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import build_chain, ergodicity_probe
from .distributions import validate_assumption1
from .errors import ConfigError, DegenerateLp
from .lpsolver import LpProblem, solve_lp
from .measures import total_variation

Z_MIN = 1e-12
MAX_UNGATED_R = 8


@dataclass
class ErrorBoundReport:
    queue: str
    measure: str
    mu: float
    r: int
    kernel_factor: float
    variation: float
    sensitivity: float
    bound: float
    z_star: list = field(default_factory=list)
    probe_delta: float = math.nan
    diagnostic: str = ""

    def to_json(self):
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True, default=float)


def sensitivity_lp(Q, s):
    """LP for one s: variables (a_1..a_J, z), minimize z.

    Row j = 0..J has e_j(a) = a_j - sum_i (1 + F_{i,j}) (a_i - a_{i-1}) with
    F_{i,j} = sum_{t<=j} q_{i,t}; a_0 = 0 and F_{i,0} = 0.  Constraints are
    |e_j| <= z for every j and |e_s + 1 - a_s| <= z.
    """
    J = Q.shape[0]
    F = np.zeros((J, J + 1))
    F[:, 1:] = np.cumsum(Q, axis=1)
    # coef[j, i-1] multiplies a_i in e_j
    W = 1.0 + F.T                                   # W[j, i-1] = 1 + F_{i,j}
    coef = -W.copy()
    coef[:, :-1] += W[:, 1:]                        # + (1 + F_{i+1,j}) for i < J
    coef[1:, :] += np.eye(J)                        # + a_j for j >= 1
    rows = [coef]
    const = [np.zeros(J + 1)]
    extra = coef[s].copy()
    if s >= 1:
        extra[s - 1] -= 1.0
    rows.append(extra[None, :])
    const.append(np.ones(1))
    E = np.vstack(rows)
    e0 = np.concatenate(const)
    n_e = E.shape[0]
    # e0 + E a <= z  and  -(e0 + E a) <= z
    A = np.vstack([np.hstack([E, -np.ones((n_e, 1))]), np.hstack([-E, -np.ones((n_e, 1))])])
    b = np.concatenate([-e0, e0])
    c = np.zeros(J + 1)
    c[-1] = 1.0
    lo = np.concatenate([-np.ones(J), [0.0]])
    hi = np.concatenate([np.ones(J), [np.inf]])
    return LpProblem(c, A, ("<=",) * A.shape[0], b, lo, hi)


def sensitivity(Q, *, backend="highs", threads=1):
    """Optimal values z*_s for s = 0..J; the sensitivity is max_s 1/z*_s."""
    J = Q.shape[0]

    def one(s):
        res = solve_lp(sensitivity_lp(Q, s), backend=backend)
        if not res.ok:
            raise DegenerateLp(f"sensitivity LP for s={s} ended {res.status}")
        return res.objective

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            z = list(pool.map(one, range(J + 1)))
    else:
        z = [one(s) for s in range(J + 1)]
    return z


def measure_variation(kind, queue, mu, n_grid=10_000):
    xi = np.linspace(0.0, queue.bound, n_grid)
    return total_variation(np.asarray(kind.g(queue, xi, mu), dtype=float) * np.ones(n_grid))


def error_bound(queue, kind, mu, r, *, allow_large=False, backend="highs", threads=1):
    """A priori bound on |E - E_r| for the upper-scheme chain of order ``r``."""
    if r > MAX_UNGATED_R and not allow_large:
        raise ConfigError(f"bound at r={r} > {MAX_UNGATED_R} needs allow_large=True")
    a1, _, ybar = validate_assumption1(queue.arrival, queue.patience)
    delta = ergodicity_probe(queue, mu, r)
    kernel_factor = ybar * a1 / 2.0 ** (r - 2)
    variation = measure_variation(kind, queue, mu)
    chain = build_chain(queue, mu, r, scheme="upper")
    z = sensitivity(chain.Q, backend=backend, threads=threads)
    report = ErrorBoundReport(queue.label, kind.name, float(mu), r, kernel_factor, variation,
                              math.nan, math.nan, z, delta)
    if min(z) <= Z_MIN:
        report.sensitivity = math.inf
        report.bound = math.inf
        report.diagnostic = f"degenerate sensitivity LP: min z* = {min(z):.3e}"
        return report
    report.sensitivity = max(1.0 / v for v in z)
    report.bound = 0.0 if variation == 0 else kernel_factor * variation * report.sensitivity
    return report
