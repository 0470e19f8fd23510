"""Capacity sizing through finite + piecewise-linear approximation.

Each queue's measure-vs-rate curves are replaced by PWL interpolants on
equally spaced knots over the queue's own rate box.  The resulting program
is linear apart from one SOS2 condition per queue and is solved exactly by
branch and bound.

Variable layout (K queues, N knots, L measures):
    mu (K) | alpha (K*N) | w (K*L) | template extras
The equity templates add w_bar, z (K) and Z and minimize Z, the mean
absolute deviation of w around its intensity-weighted mean.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .chain import EVAL_SCHEME
from .errors import Infeasible, InfeasibleBox
from .lpsolver import (LpProblem, enumerate_segments, solve_milp_sos2,
                       solve_sos2_local_search)
from .measures import AbandonmentProb, OfferedSojourn, finite_measures
from .pwl import build_pwl_family, knot_grid

log = logging.getLogger(__name__)

TEMPLATES = ("generic", "equity_ost", "equity_ab")
DEFAULT_THETA = (0.65, 0.95)
SUPPLY_RATIO = 0.879
LOCAL_SEARCH_K = 200
TIE_TOL = 1e-9


@dataclass
class SizingProblem:
    queues: list
    measures: list
    template: str = "generic"
    p: np.ndarray = None            # cost on w, length K*L (generic)
    M: np.ndarray = None            # coupling rows on w (generic)
    d: np.ndarray = None
    varsigma: float = np.inf        # efficiency cap on the weighted mean (equity)
    mu_total: float = np.inf
    theta: tuple = DEFAULT_THETA
    mu_min: float = 0.0
    mu_max: float = np.inf
    n_knots: int = 7
    r: int = 10
    eps: float = 1e-3
    scheme: str = EVAL_SCHEME

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        lo, hi = self.theta
        if not hi > lo > 0:
            raise ValueError("need theta_U > theta_L > 0")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        K, L = self.K, self.L
        if self.template == "generic":
            self.p = np.zeros(K * L) if self.p is None else np.asarray(self.p, dtype=float)
            if self.p.size != K * L:
                raise ValueError(f"cost vector needs {K * L} entries")
            if self.M is None:
                self.M = np.zeros((0, K * L))
                self.d = np.zeros(0)
            self.M = np.asarray(self.M, dtype=float).reshape(-1, K * L)
            self.d = np.asarray(self.d, dtype=float).reshape(-1)
            if self.M.shape[0] != self.d.size:
                raise ValueError("M and d disagree in row count")
        elif L != 1:
            raise ValueError("equity templates take exactly one measure")
        for q in self.queues:
            if self.theta[0] * q.intensity > self.mu_max:
                raise InfeasibleBox(f"queue {q.label}: lower box {self.theta[0] * q.intensity:g} "
                                    f"exceeds mu_max {self.mu_max:g}")

    @property
    def K(self):
        return len(self.queues)

    @property
    def L(self):
        return len(self.measures)

    @property
    def intensities(self):
        return np.array([q.intensity for q in self.queues])

    def boxes(self):
        lam = self.intensities
        lo = np.maximum(self.theta[0] * lam, self.mu_min)
        hi = np.minimum(self.theta[1] * lam, self.mu_max)
        return lo, hi

    def knots(self):
        lo, hi = self.boxes()
        return [knot_grid(a, b, n_knots=self.n_knots) for a, b in zip(lo, hi)]


@dataclass
class Solution:
    mu: np.ndarray
    w: np.ndarray                    # K x L
    objective: float
    w_bar: float = np.nan
    z: np.ndarray = None
    Z: float = np.nan
    slack: dict = field(default_factory=dict)
    heuristic: bool = False
    verification: dict = None
    info: dict = field(default_factory=dict)

    def ratios(self, problem):
        return self.mu / problem.intensities


def build_equity_model(queues, kind, varsigma, mu_total=None, theta=DEFAULT_THETA, n_knots=7,
                       r=10, eps=1e-3, mu_min=0.0, mu_max=np.inf, scheme=EVAL_SCHEME):
    """Equity template for offered sojourn time or abandonment probability."""
    if isinstance(kind, OfferedSojourn):
        template = "equity_ost"
    elif isinstance(kind, AbandonmentProb):
        template = "equity_ab"
    else:
        raise ValueError("equity templates cover offered sojourn and abandonment only")
    if not varsigma > 0:
        raise ValueError("varsigma must be positive")
    if mu_total is None:
        mu_total = SUPPLY_RATIO * sum(q.intensity for q in queues)
    if not mu_total > 0:
        raise ValueError("mu_total must be positive")
    return SizingProblem(list(queues), [kind], template, varsigma=float(varsigma),
                         mu_total=float(mu_total), theta=tuple(theta), mu_min=mu_min,
                         mu_max=mu_max, n_knots=n_knots, r=r, eps=eps, scheme=scheme)


# ------------------------------------------------------------------ assembly


@dataclass
class _Layout:
    K: int
    N: int
    L: int
    extra: int

    @property
    def n(self):
        return self.K + self.K * self.N + self.K * self.L + self.extra

    def mu(self, k):
        return k

    def alpha(self, k, i):
        return self.K + k * self.N + i

    def w(self, k, l):
        return self.K + self.K * self.N + k * self.L + l

    @property
    def wbar(self):
        return self.K + self.K * self.N + self.K * self.L

    def zk(self, k):
        return self.wbar + 1 + k

    @property
    def Z(self):
        return self.wbar + 1 + self.K


def pwl_tables(problem, threads=1):
    """phi[k] is an L x N array of knot values for queue k."""
    tables = []
    for q, kn in zip(problem.queues, problem.knots()):
        fam = build_pwl_family(q, problem.measures, kn, problem.r, scheme=problem.scheme,
                               threads=threads)
        tables.append(np.array([fam[m.name].values for m in problem.measures]))
    return tables


def assemble(problem, phi):
    """The piecewise-linear program as an LpProblem plus its SOS2 sets and layout."""
    K, L, N = problem.K, problem.L, problem.n_knots
    equity = problem.template != "generic"
    lay = _Layout(K, N, L, K + 2 if equity else 0)
    n = lay.n
    knots = problem.knots()
    rows, senses, rhs = [], [], []

    def add(coefs, sense, b):
        row = np.zeros(n)
        for j, v in coefs:
            row[j] += v
        rows.append(row)
        senses.append(sense)
        rhs.append(b)

    half = problem.eps / 2
    for k in range(K):
        add([(lay.mu(k), 1.0)] + [(lay.alpha(k, i), -knots[k][i]) for i in range(N)], "=", 0.0)
        add([(lay.alpha(k, i), 1.0) for i in range(N)], "=", 1.0)
        for l in range(L):
            band = [(lay.alpha(k, i), phi[k][l, i]) for i in range(N)]
            add(band + [(lay.w(k, l), -1.0)], "<=", half)
            if equity:
                add([(j, -v) for j, v in band] + [(lay.w(k, l), 1.0)], "<=", half)
    if np.isfinite(problem.mu_total):
        add([(lay.mu(k), 1.0) for k in range(K)], "<=", problem.mu_total)
    c = np.zeros(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    blo, bhi = problem.boxes()
    lo[:K], hi[:K] = blo, bhi
    lo[K:K + K * N], hi[K:K + K * N] = 0.0, 1.0
    if equity:
        lam = problem.intensities
        add([(lay.wbar, lam.sum())] + [(lay.w(k, 0), -lam[k]) for k in range(K)], "=", 0.0)
        for k in range(K):
            add([(lay.w(k, 0), 1.0), (lay.wbar, -1.0), (lay.zk(k), -1.0)], "<=", 0.0)
            add([(lay.w(k, 0), -1.0), (lay.wbar, 1.0), (lay.zk(k), -1.0)], "<=", 0.0)
        add([(lay.Z, float(K))] + [(lay.zk(k), -1.0) for k in range(K)], "=", 0.0)
        if np.isfinite(problem.varsigma):
            add([(lay.wbar, 1.0)], "<=", problem.varsigma)
        lo[lay.zk(0):lay.Z + 1] = 0.0
        c[lay.Z] = 1.0
    else:
        for k in range(K):
            for l in range(L):
                c[lay.w(k, l)] = problem.p[k * L + l]
        for row, b in zip(problem.M, problem.d):
            add([(lay.w(k, l), row[k * L + l]) for k in range(K) for l in range(L)], "<=", b)
    sets = [[lay.alpha(k, i) for i in range(N)] for k in range(K)]
    A = np.array(rows).reshape(-1, n)
    return LpProblem(c, A, tuple(senses), np.array(rhs), lo, hi), sets, lay


def _tie_break(lp, sets, lay, problem, z_star):
    """Among Z-optimal points, minimize the MAD of allocation ratios mu_k / lambda_k."""
    K = problem.K
    lam = problem.intensities
    n0 = lp.n_vars
    n = n0 + 1 + K                      # rho_bar, u_k
    A = np.hstack([lp.A, np.zeros((lp.n_rows, 1 + K))])
    extra, rhs = [], []
    row = np.zeros(n)
    row[lay.Z] = 1.0
    extra.append(row)
    rhs.append(z_star + TIE_TOL * max(1.0, abs(z_star)))
    for k in range(K):
        for sgn in (1.0, -1.0):
            row = np.zeros(n)
            row[lay.mu(k)] = sgn / lam[k]
            row[n0] = -sgn
            row[n0 + 1 + k] = -1.0
            extra.append(row)
            rhs.append(0.0)
    c = np.zeros(n)
    c[n0 + 1:] = 1.0
    lo = np.concatenate([lp.lo, [-np.inf], np.zeros(K)])
    hi = np.concatenate([lp.hi, [np.inf], np.full(K, np.inf)])
    return LpProblem(c, np.vstack([A, extra]), lp.senses + ("<=",) * len(extra),
                     np.concatenate([lp.b, rhs]), lo, hi)


def run_algorithm1(problem, *, mode="auto", tie_break=True, threads=1, phi=None,
                   eps_gap=1e-10, node_limit=200_000):
    """Build PWL tables, assemble the mixed-integer program, solve by SOS2 branch and bound."""
    lo, _ = problem.boxes()
    if np.isfinite(problem.mu_total) and lo.sum() > problem.mu_total:
        raise Infeasible(f"budget {problem.mu_total:g} is below the sum of lower boxes {lo.sum():g}")
    phi = pwl_tables(problem, threads) if phi is None else phi
    lp, sets, lay = assemble(problem, phi)
    if mode == "auto":
        mode = "local_search" if problem.K > LOCAL_SEARCH_K else "exact"
    if mode == "exact":
        res = solve_milp_sos2(lp, sets, eps_gap, node_limit=node_limit)
    elif mode == "local_search":
        res = solve_sos2_local_search(lp, sets)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not res.ok:
        raise Infeasible(f"piecewise-linear program is {res.status}")
    objective = res.objective
    x = res.x
    if tie_break and problem.template != "generic" and mode == "exact":
        tb = solve_milp_sos2(_tie_break(lp, sets, lay, problem, objective), sets, eps_gap,
                             node_limit=node_limit)
        if tb.ok:
            x = tb.x[:lp.n_vars]
    return _solution(problem, lay, x, objective, res.heuristic, phi,
                     {"nodes": res.info.get("nodes", 0), "mode": mode})


def _solution(problem, lay, x, objective, heuristic, phi, info):
    K, L = problem.K, problem.L
    mu = np.array([x[lay.mu(k)] for k in range(K)])
    w = np.array([[x[lay.w(k, l)] for l in range(L)] for k in range(K)])
    sol = Solution(mu, w, float(objective), heuristic=heuristic, info=dict(info, phi=phi))
    if problem.template != "generic":
        lam = problem.intensities
        sol.w_bar = float(lam @ w[:, 0] / lam.sum())
        sol.z = np.abs(w[:, 0] - sol.w_bar)
        sol.Z = float(sol.z.mean())
    if np.isfinite(problem.mu_total):
        sol.slack["budget"] = float(problem.mu_total - mu.sum())
    if problem.template != "generic" and np.isfinite(problem.varsigma):
        sol.slack["efficiency"] = float(problem.varsigma - sol.w_bar)
    if problem.template == "generic" and problem.M.shape[0]:
        sol.slack["coupling"] = (problem.d - problem.M @ w.ravel()).tolist()
    return sol


def enumeration_oracle(problem, phi=None):
    """Objective by brute force over every segment assignment (small K only)."""
    phi = pwl_tables(problem) if phi is None else phi
    lp, sets, _ = assemble(problem, phi)
    res = enumerate_segments(lp, sets)
    if not res.ok:
        raise Infeasible("every segment assignment is infeasible")
    return res.objective


def verify_epsilon_optimality(sol, problem, r_check, *, threads=1):
    """Re-evaluate measures at order ``r_check`` and check the epsilon conditions."""
    if r_check <= problem.r:
        raise ValueError("r_check must exceed the problem's r")
    exact = np.array([[v for v in finite_measures(q, mu, problem.measures, r_check,
                                                  scheme=problem.scheme,
                                                  threads=threads).values()]
                      for q, mu in zip(problem.queues, sol.mu)])
    gap = exact - sol.w
    ok_coupling = True
    if problem.template == "generic" and problem.M.shape[0]:
        ok_coupling = bool(np.all(problem.M @ sol.w.ravel() <= problem.d + 1e-9))
    if np.isfinite(problem.mu_total):
        ok_coupling = ok_coupling and sol.mu.sum() <= problem.mu_total + 1e-9
    report = {
        "r_check": r_check,
        "exact": exact.tolist(),
        "max_violation": float(gap.max()),
        "max_abs_gap": float(np.abs(gap).max()),
        "coupling_ok": ok_coupling,
    }
    report["passed"] = bool(report["max_violation"] <= problem.eps + 1e-6 and ok_coupling)
    sol.verification = report
    return report
