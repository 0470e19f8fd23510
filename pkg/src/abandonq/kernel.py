"""One-step transition kernel of the offered-waiting-time chain.

tau(x, u; mu) = P[xi_{n+1} <= x | xi_n = u].  Writing the server occupation
of the current customer as D = min(s, (y - u)^+), the next offered wait is
(u + D - t)^+, so

    tau(x, u) = S_A(u - x) - int_{max(u, x)}^{ybar} f_A(v - x) e^{-mu (v - u)} (1 - G(v)) dv

with S_A(w) = P(t >= w).  The remaining integral is one-dimensional on a
finite interval.  It has an elementary antiderivative whenever the arrival
density is a sum of (truncated) exponentials and the patience survival is
a sum of linear-times-exponential terms; otherwise it is integrated by
adaptive Gauss-Legendre quadrature.
"""

from dataclasses import dataclass

import numpy as np

from .distributions import validate_assumption1
from .errors import QuadratureFailure
from .quadrature import adaptive_gauss_legendre, exp_moments, gauss_legendre

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class KernelContext:
    arrival: object
    patience: object
    mu: float
    tol: float = DEFAULT_TOL
    max_subdivisions: int = 400
    method: str = "auto"  # "auto", "closed", "quadrature"

    @property
    def ybar(self):
        return self.patience.bound

    @classmethod
    def for_queue(cls, queue, mu, **kw):
        return cls(queue.arrival, queue.patience, float(mu), **kw)

    @property
    def closed_form(self):
        if self.method == "quadrature":
            return False
        ok = self.arrival.density_pieces() is not None
        if self.method == "closed" and not ok:
            raise ValueError(f"no closed-form kernel for {type(self.arrival).__name__}")
        return ok


def _closed_integral(arrival, patience, mu, x, u):
    """The integral term of tau, broadcast over arrays ``x`` and ``u``."""
    ybar = patience.bound
    total = 0.0
    for c, rho, lo, hi in arrival.density_pieces():
        start = np.maximum(u, x + lo)
        end = np.minimum(ybar, x + hi)
        width = np.maximum(end - start, 0.0)
        for alpha, beta, theta in patience.survival_terms():
            kappa = rho + mu + theta
            with np.errstate(over="ignore", under="ignore"):
                pref = c * np.exp(-rho * (start - x - lo) - mu * (start - u) - theta * start)
            e0, e1 = exp_moments(kappa, width)
            total = total + pref * ((alpha + beta * start) * e0 + beta * e1)
    return total


def _kernel_closed(ctx, x, u):
    x = np.asarray(x, dtype=float)
    u = np.clip(np.asarray(u, dtype=float), 0.0, ctx.ybar)
    out = ctx.arrival.sf(u - x) - _closed_integral(ctx.arrival, ctx.patience, ctx.mu, x, u)
    out = np.where(x >= ctx.ybar, 1.0, out)
    return np.where(x < 0, 0.0, out)


def _kernel_quad_scalar(ctx, x, u):
    ybar = ctx.ybar
    if x < 0:
        return 0.0
    if x >= ybar:
        return 1.0
    u = min(max(u, 0.0), ybar)
    arrival, patience, mu = ctx.arrival, ctx.patience, ctx.mu
    lo = max(u, x)

    def integrand(v):
        return arrival.pdf(v - x) * np.exp(-mu * (v - u)) * patience.sf(v)

    # geometric breakpoints resolve the e^{-mu (v - lo)} boundary layer
    brk = [lo + 2.0**k / mu for k in range(-4, 12)]
    pieces = arrival.density_pieces()
    if pieces is not None:
        for _, _, plo, phi in pieces:
            brk += [x + plo, x + phi]
    integral = adaptive_gauss_legendre(integrand, lo, ybar, tol=ctx.tol,
                                       max_subdivisions=ctx.max_subdivisions, breakpoints=brk)
    return float(arrival.sf(u - x)) - integral


def kernel_eval(ctx, x, u):
    """tau(x, u; mu) for scalars (or, on the closed-form route, arrays)."""
    if ctx.closed_form:
        out = _kernel_closed(ctx, x, u)
        return float(out) if out.ndim == 0 else out
    if np.ndim(x) or np.ndim(u):
        xb, ub = np.broadcast_arrays(np.asarray(x, float), np.asarray(u, float))
        return np.array([_kernel_quad_scalar(ctx, a, b) for a, b in zip(xb.ravel(), ub.ravel())]
                        ).reshape(xb.shape)
    return _kernel_quad_scalar(ctx, float(x), float(u))


def state_grid(ybar, r):
    return ybar * np.arange(2**r + 1) / 2**r


SCHEMES = ("upper", "midpoint")


def cut_points(ybar, r, scheme="upper"):
    """Right ends of the x-intervals lumped into each state.

    "upper" sends (c_{j-1}, c_j] to c_j; "midpoint" sends
    (c_j - delta/2, c_j + delta/2] to c_j.  The last cut is always ybar.
    """
    c = state_grid(ybar, r)
    if scheme == "upper":
        return c
    if scheme == "midpoint":
        return np.concatenate([c[:-1] + 0.5 * (c[1] - c[0]), [ybar]])
    raise ValueError(f"unknown discretization scheme {scheme!r}")


def kernel_grid(ctx, r, scheme="upper", block=512):
    """Matrix T[i, j] = tau(x_j, c_i) with x the scheme's cut points (last column 1)."""
    validate_assumption1(ctx.arrival, ctx.patience)
    c = state_grid(ctx.ybar, r)
    x = cut_points(ctx.ybar, r, scheme)
    if ctx.closed_form:
        n = c.size
        out = np.empty((n, n))
        for s in range(0, n, block):
            out[s:s + block] = _kernel_closed(ctx, x[None, :], c[s:s + block, None])
    else:
        out = _kernel_grid_quadrature(ctx, c, 1 if scheme == "upper" else 2)
    out[:, -1] = 1.0
    return out


def _composite_rule(width, panels, n=8, grading=12):
    """Gauss-Legendre on ``panels`` equal panels, the first one split geometrically.

    The grading toward 0 handles arrival densities like t^(k-1) with
    non-integer k, whose derivatives blow up where v meets the cut point.
    """
    x, w = gauss_legendre(n)
    first = width / panels
    edges = np.concatenate([[0.0], first * 2.0 ** -np.arange(grading, 0, -1),
                            np.linspace(first, width, panels)])
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _grid_integrals(ctx, c, fine, panels):
    """I[i, j] = int_{c_i}^{ybar} f_A(v - x_j) e^{-mu (v - c_i)} (1 - G(v)) dv.

    The v-axis is cut into cells of width eta = delta / fine; row points sit
    at fine index fine * i and cut points x_j at fine * j + (fine - 1), so
    every integrand is smooth inside each cell.  Rows are filled by a
    backward scan over cells, keeping memory linear in the state count.
    """
    mu = ctx.mu
    n = c.size
    eta = (c[1] - c[0]) / fine
    ncell = fine * (n - 1)
    h, w = _composite_rule(eta, panels)
    offsets = eta * np.arange(ncell)
    weighted = ctx.arrival.pdf(offsets[:, None] + h[None, :]) * (w * np.exp(-mu * h))[None, :]
    gb = ctx.patience.sf(offsets[:, None] + h[None, :])
    xf = fine * np.arange(n - 1) + (fine - 1)
    decay = np.exp(-mu * eta)
    acc = np.zeros(n - 1)
    out = np.empty((n, n - 1))
    out[n - 1] = 0.0
    for m in range(ncell - 1, -1, -1):
        d = m - xf
        ok = d >= 0
        contrib = weighted[np.where(ok, d, 0)] @ gb[m]
        acc = np.where(ok, contrib, 0.0) + decay * acc
        if m % fine == 0:
            out[m // fine] = acc
    return out


def _kernel_grid_quadrature(ctx, c, fine):
    panels = 1
    prev = _grid_integrals(ctx, c, fine, panels)
    while True:
        panels *= 2
        cur = _grid_integrals(ctx, c, fine, panels)
        err = float(np.max(np.abs(cur - prev)))
        if err <= ctx.tol:
            break
        if panels >= ctx.max_subdivisions:
            raise QuadratureFailure(
                f"grid quadrature error {err:.2e} above {ctx.tol:.0e} with {panels} panels per cell")
        prev = cur
    n = c.size
    x = c[:-1] + (c[1] - c[0]) * (fine - 1) / fine
    out = np.empty((n, n))
    out[:, :-1] = ctx.arrival.sf(c[:, None] - x[None, :]) - cur
    return out
