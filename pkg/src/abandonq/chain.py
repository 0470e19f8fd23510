"""Finite-state approximation of the offered-waiting-time chain.

States are c_i = (i - 1) ybar / 2^r, i = 1..2^r + 1.  Under the "upper"
scheme the transition probability from c_i to c_j is the kernel mass on
(c_{j-1}, c_j], i.e. every next state is rounded up to the grid.  The
"midpoint" scheme lumps (c_j - delta/2, c_j + delta/2] into c_j instead,
which removes the O(delta) upward bias of rounding at every step.  Mass at
or below 0 always goes to c_1 = 0 and mass near ybar to c_J.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import validate_assumption1
from .errors import NotConverged, NumericalFailure, SingularSystem
from .kernel import KernelContext, _kernel_closed, cut_points, kernel_grid, state_grid
from .quadrature import adaptive_gauss_legendre

log = logging.getLogger(__name__)

NEG_CLAMP = 1e-12
DIRECT_MAX_STATES = 4097
EVAL_SCHEME = "midpoint"  # default for measure evaluation; bounds always use "upper"
PROBE_MIN_DELTA = 1e-6
PLAIN_BUDGET = 2000
MAX_SQUARINGS = 64


@dataclass
class FiniteChain:
    r: int
    states: np.ndarray
    Q: np.ndarray
    mu: float
    ybar: float
    label: str = ""
    scheme: str = "upper"

    @property
    def n_states(self):
        return self.states.size


@dataclass
class StationaryVector:
    v: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    info: dict = field(default_factory=dict)


def transition_matrix(tau):
    """Row i, column j: tau(x_j, c_i) - tau(x_{j-1}, c_i), with tau(x_0, .) = 0."""
    q = np.empty_like(tau)
    q[:, 0] = tau[:, 0]
    np.subtract(tau[:, 1:], tau[:, :-1], out=q[:, 1:])
    worst = float(q.min())
    if worst < -NEG_CLAMP:
        raise NumericalFailure(f"transition matrix entry {worst:.3e} below -{NEG_CLAMP:g}")
    np.maximum(q, 0.0, out=q)
    q /= q.sum(axis=1, keepdims=True)
    return q


def build_chain(queue, mu, r, *, scheme="upper", method="auto", tol=1e-10, threads=1):
    """Build the order-``r`` chain for ``queue`` at service rate ``mu``."""
    if r < 1:
        raise ValueError("approximation order r must be >= 1")
    validate_assumption1(queue.arrival, queue.patience)
    ctx = KernelContext.for_queue(queue, mu, tol=tol, method=method)
    tau = _kernel_grid_parallel(ctx, r, scheme, threads)
    return FiniteChain(r, state_grid(ctx.ybar, r), transition_matrix(tau), float(mu),
                       ctx.ybar, queue.label, scheme)


def _kernel_grid_parallel(ctx, r, scheme, threads):
    if threads <= 1 or not ctx.closed_form:
        return kernel_grid(ctx, r, scheme)
    c = state_grid(ctx.ybar, r)
    x = cut_points(ctx.ybar, r, scheme)
    # fixed row blocks: each entry is computed identically whatever the thread count
    blocks = [np.arange(s, min(s + 512, c.size)) for s in range(0, c.size, 512)]
    out = np.empty((c.size, c.size))

    def work(rows):
        out[rows] = _kernel_closed(ctx, x[None, :], c[rows, None])

    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(work, blocks))
    out[:, -1] = 1.0
    return out


def _residual(Q, v):
    return float(np.max(np.abs(Q.T @ v - v)))


def _solve_direct(Q, tol):
    n = Q.shape[0]
    a = Q.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        v = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"balance equations are singular: {exc}") from exc
    if not np.all(np.isfinite(v)) or v.min() < -1e-8:
        raise SingularSystem("balance equations have no nonnegative solution; "
                             "the chain may have several recurrent classes")
    v = np.maximum(v, 0.0)
    return v / v.sum()


def _solve_power(Q, tol, max_iters, v0, check_every=10):
    """Iterate v <- Q^T v; fall back to repeated squaring when that stalls.

    Coarse chains on a long patience window can have a subdominant eigenvalue
    within 1e-6 of 1, where plain iteration needs ~10^7 steps.  After
    ``PLAIN_BUDGET`` steps (or ``max_iters``, whichever is smaller) chains with
    at most ``DIRECT_MAX_STATES`` states switch to v <- M v, M <- M M with
    M = (Q^T)^(2^k), which reaches the same limit in O(log n) dense products.
    """
    n = Q.shape[0]
    v = np.full(n, 1.0 / n) if v0 is None else np.asarray(v0, dtype=float) / np.sum(v0)
    qt = np.ascontiguousarray(Q.T)
    res = np.inf
    it = 0
    budget = max_iters if n > DIRECT_MAX_STATES else min(max_iters, PLAIN_BUDGET)
    while it < budget:
        for _ in range(check_every):
            v = qt @ v
        it += check_every
        v /= v.sum()
        res = float(np.max(np.abs(qt @ v - v)))
        if res <= tol:
            return v, it, 0
    if n > DIRECT_MAX_STATES or budget == max_iters:
        raise NotConverged(it, res)
    m = qt.copy()
    for k in range(1, MAX_SQUARINGS + 1):
        v = m @ v
        v /= v.sum()
        it += 2 ** (k - 1)
        res = float(np.max(np.abs(qt @ v - v)))
        m = m @ m
        if res <= tol:
            # the residual only bounds the error by res / spectral gap, which is
            # what made the fallback necessary; one more squared step squares it
            v = m @ v
            v /= v.sum()
            return v, it + 2 ** k, k + 1
        m /= m.sum(axis=0, keepdims=True)  # columns of (Q^T)^n stay probability vectors
    raise NotConverged(it, res)


def stationary_vector(chain, method="auto", tol=None, max_iters=10**6, v0=None):
    """Stationary probability vector of ``chain.Q``.

    ``method`` is "direct" (dense solve with one balance row replaced by the
    normalization row), "power" (iterate v <- Q^T v) or "auto" (direct up to
    4097 states, power beyond).  ``max_iters`` caps plain power steps; when
    it is at most ``PLAIN_BUDGET`` the squaring fallback is disabled.
    """
    Q = chain.Q
    if method == "auto":
        method = "direct" if Q.shape[0] <= DIRECT_MAX_STATES else "power"
    if method == "direct":
        tol = 1e-10 if tol is None else tol
        v = _solve_direct(Q, tol)
        res = _residual(Q, v)
        if res > tol:
            raise NumericalFailure(f"direct solve residual {res:.2e} exceeds {tol:.0e}")
        return StationaryVector(v, res, "direct")
    if method == "power":
        tol = 1e-12 if tol is None else tol
        v, it, squarings = _solve_power(Q, tol, max_iters, v0)
        return StationaryVector(v, _residual(Q, v), "power", iterations=it,
                                info={"squarings": squarings})
    raise ValueError(f"unknown method {method!r}")


def stationary_distribution(sv, chain, x):
    """pi(x) = sum of stationary mass on states <= x."""
    v = sv.v if isinstance(sv, StationaryVector) else np.asarray(sv)
    cum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.searchsorted(chain.states, np.asarray(x, dtype=float), side="right")
    out = np.minimum(cum[idx], 1.0)
    return float(out) if np.ndim(out) == 0 else out


def ergodicity_probe(queue, mu, r):
    """delta = P[t - s >= ybar / 2^r] for one inter-arrival t and service s ~ Exp(mu)."""
    eps = queue.bound / 2**r
    arrival = queue.arrival
    pieces = arrival.density_pieces()
    if pieces is not None and all(lo == 0 and np.isinf(hi) and rho > 0
                                  for _, rho, lo, hi in pieces):
        # mixture of exponentials: P[t >= eps + s] = sum p e^{-rho eps} mu/(mu + rho)
        return float(sum(c / rho * np.exp(-rho * eps) * mu / (mu + rho)
                         for c, rho, _, _ in pieces))
    return adaptive_gauss_legendre(
        lambda s: mu * np.exp(-mu * s) * arrival.sf(eps + s), 0.0, 60.0 / mu,
        tol=1e-13, breakpoints=[2.0**k / mu for k in range(-3, 6)])


def estimate_r_star(queue, mu, r_max=30):
    """Smallest r whose probe probability exceeds the detection threshold."""
    for r in range(1, r_max + 1):
        if ergodicity_probe(queue, mu, r) > PROBE_MIN_DELTA:
            return r
    raise NumericalFailure(f"no approximation order up to {r_max} passes the ergodicity probe")


def expected_value(chain, sv, values):
    """sum_i values_i v_i."""
    v = sv.v if isinstance(sv, StationaryVector) else np.asarray(sv)
    return float(np.dot(values, v))


def dump_chain(chain, sv, path):
    """Write states, stationary vector and transition matrix for debugging.

    ``.npz`` paths get a binary archive, anything else a CSV whose first two
    columns are the state and its stationary mass followed by the row of Q.
    """
    path = str(path)
    if path.endswith(".npz"):
        np.savez(path, states=chain.states, v=sv.v, Q=chain.Q, mu=chain.mu, r=chain.r)
        return
    header = "state,v," + ",".join(f"q{j}" for j in range(chain.n_states))
    data = np.column_stack([chain.states, sv.v, chain.Q])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
