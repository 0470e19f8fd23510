"""Numerical integration helpers.

``adaptive_gauss_legendre`` is a globally adaptive Gauss-Legendre rule
(bisect the interval with the largest error estimate until the summed
estimate meets the tolerance).  ``exp_moments`` gives the two elementary
integrals that every closed form in this package reduces to.
"""

import heapq
from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [-1, 1] (cached)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gl(f, a, b, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * np.dot(w, f(mid + half * x))


def _panel(f, a, b, n):
    whole = _gl(f, a, b, n)
    m = 0.5 * (a + b)
    left = _gl(f, a, m, n)
    right = _gl(f, m, b, n)
    return left + right, abs(left + right - whole)


def adaptive_gauss_legendre(f, a, b, tol=1e-10, max_subdivisions=200, n=10,
                            breakpoints=()):
    """Integrate a vectorized ``f`` over ``[a, b]``.

    ``breakpoints`` inside ``(a, b)`` split the initial partition, which is
    how callers deal with known kinks and jumps of the integrand.  Raises
    ``QuadratureFailure`` if the absolute tolerance is not met within
    ``max_subdivisions`` bisections.
    """
    if b <= a:
        return 0.0
    edges = [a] + sorted(p for p in breakpoints if a < p < b) + [b]
    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = _panel(f, lo, hi, n)
        total += val
        err += e
        heapq.heappush(heap, (-e, lo, hi, val))
    splits = 0
    while err > tol:
        if splits >= max_subdivisions:
            raise QuadratureFailure(
                f"adaptive quadrature on [{a}, {b}] stalled at error "
                f"{err:.2e} > {tol:.0e} after {splits} subdivisions"
            )
        neg_e, lo, hi, val = heapq.heappop(heap)
        total -= val
        err += neg_e
        mid = 0.5 * (lo + hi)
        for l2, h2 in ((lo, mid), (mid, hi)):
            v2, e2 = _panel(f, l2, h2, n)
            total += v2
            err += e2
            heapq.heappush(heap, (-e2, l2, h2, v2))
        splits += 1
    return float(total)


def exp_moments(kappa, width):
    """Return ``(E0, E1)`` with E0 = int_0^W e^{-k h} dh, E1 = int_0^W h e^{-k h} dh.

    Broadcasts over arrays; stable for ``kappa * width`` near zero
    (including ``kappa == 0``).  ``width`` must be nonnegative.
    """
    kappa = np.asarray(kappa, dtype=float)
    width = np.asarray(width, dtype=float)
    kw = kappa * width
    small = kw < 1e-3
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e = np.exp(-kw)
        e0_big = -np.expm1(-kw) / kappa
        e1_big = (e0_big - width * e) / kappa
    # Taylor series in kw; four terms are enough below 1e-3.
    e0_small = width * (1 - kw / 2 + kw**2 / 6 - kw**3 / 24)
    e1_small = width**2 * (0.5 - kw / 3 + kw**2 / 8 - kw**3 / 30)
    e0 = np.where(small, e0_small, e0_big)
    e1 = np.where(small, e1_small, e1_big)
    return e0, e1
