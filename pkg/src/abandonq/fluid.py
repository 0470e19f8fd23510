"""Fluid baseline: the stationary offered wait degenerates to a point mass."""

from dataclasses import dataclass

import numpy as np

BISECT_TOL = 1e-12


@dataclass(frozen=True)
class FluidResult:
    w_fluid: float
    regime: str  # "overloaded" or "underloaded"


def fluid_offered_wait(queue, mu):
    """w = inf{x : G(x) >= 1 - mu/lambda} when mu < lambda, else 0."""
    lam = queue.intensity
    if mu >= lam:
        return FluidResult(0.0, "underloaded")
    target = 1.0 - mu / lam
    pat = queue.patience
    if float(pat.cdf(0.0)) >= target:
        return FluidResult(0.0, "overloaded")
    lo, hi = 0.0, pat.bound
    # invariant: G(lo) < target <= G(hi); G(ybar) = 1
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if float(pat.cdf(mid)) >= target:
            hi = mid
        else:
            lo = mid
    return FluidResult(hi, "overloaded")


def fluid_measures(queue, mu, kinds):
    w = fluid_offered_wait(queue, mu).w_fluid
    return {k.name: float(np.asarray(k.g(queue, w, mu))) for k in kinds}
