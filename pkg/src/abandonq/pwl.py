"""Piecewise-linear approximations of measure-vs-service-rate curves."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import EVAL_SCHEME, build_chain, stationary_vector
from .errors import OutOfDomain
from .measures import expected_measure


def knot_grid(mu_min, mu_max, m=None, n_knots=None):
    """Equally spaced knots: 2^m + 1 of them, or exactly ``n_knots``."""
    if not mu_max > mu_min > 0:
        raise ValueError("need mu_max > mu_min > 0")
    if (m is None) == (n_knots is None):
        raise ValueError("give exactly one of m and n_knots")
    n = 2**m + 1 if m is not None else int(n_knots)
    if n < 2:
        raise ValueError("need at least two knots")
    knots = mu_min + (mu_max - mu_min) * np.arange(n) / (n - 1)
    knots[-1] = mu_max
    return knots


@dataclass(frozen=True)
class PwlFunction:
    knots: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.size < 2 or k.shape != v.shape or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing and match values")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, mu):
        return eval_pwl(self, mu)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.knots, self.values]), delimiter=",",
                   header="mu,phi", comments="", fmt="%.17g")


def eval_pwl(f, mu):
    mu_arr = np.asarray(mu, dtype=float)
    lo, hi = f.domain
    # tolerate representation error at the ends
    slack = 1e-12 * max(1.0, abs(hi))
    if np.any(mu_arr < lo - slack) or np.any(mu_arr > hi + slack):
        raise OutOfDomain(f"service rate {mu} outside PWL domain [{lo}, {hi}]")
    out = np.interp(np.clip(mu_arr, lo, hi), f.knots, f.values)
    return float(out) if out.ndim == 0 else out


def knot_measures(queue, kinds, knots, r, *, scheme=EVAL_SCHEME, threads=1):
    """Array [len(kinds), len(knots)] of finite-approximation values, one chain per knot."""

    def one(mu):
        chain = build_chain(queue, mu, r, scheme=scheme)
        sv = stationary_vector(chain)
        return [expected_measure(k, queue, chain, sv) for k in kinds]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, knots))
    else:
        rows = [one(mu) for mu in knots]
    return np.asarray(rows, dtype=float).T.reshape(len(kinds), len(knots))


def build_pwl_family(queue, kinds, knots, r, *, scheme=EVAL_SCHEME, threads=1):
    """{measure name: PwlFunction} sharing the chains across measures."""
    knots = np.asarray(knots, dtype=float)
    vals = knot_measures(queue, kinds, knots, r, scheme=scheme, threads=threads)
    return {k.name: PwlFunction(knots, vals[i], f"{queue.label}:{k.name}")
            for i, k in enumerate(kinds)}


def build_pwl(queue, kind, r, m=None, mu_min=None, mu_max=None, *, n_knots=None,
              scheme=EVAL_SCHEME, threads=1):
    knots = knot_grid(mu_min, mu_max, m=m, n_knots=n_knots)
    return build_pwl_family(queue, [kind], knots, r, scheme=scheme, threads=threads)[kind.name]


def segment_of(f, mu):
    """Index of the segment [knot_i, knot_{i+1}] containing ``mu``."""
    i = int(np.searchsorted(f.knots, mu, side="right")) - 1
    return min(max(i, 0), f.knots.size - 2)


def max_gap(f, dense_mu, exact_values):
    return float(np.max(np.abs(eval_pwl(f, dense_mu) - np.asarray(exact_values))))


__all__ = ["PwlFunction", "knot_grid", "eval_pwl", "build_pwl", "build_pwl_family",
           "knot_measures", "segment_of", "max_gap"]
