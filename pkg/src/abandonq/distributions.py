"""Inter-arrival, patience and service time distributions.

All time units are abstract "years".  Arrival distributions are continuous
on [0, inf); patience distributions are bounded by ``bound`` and place any
truncated tail mass as an atom at the bound, so ``G(bound) == 1`` exactly.

Closed-form kernels and measures elsewhere in the package rely on two
structural hooks:

* ``ArrivalDist.density_pieces()`` writes the density as a sum of
  ``c * exp(-rate * (w - lo))`` on ``[lo, hi)``;
* ``PatienceDist.survival_terms()`` writes ``1 - G(v)`` on ``[0, bound)``
  as a sum of ``(alpha + beta * v) * exp(-theta * v)``.

Distributions without density pieces (Gamma, Erlang) go through numerical
quadrature instead.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import Inadmissible, SchemaError, ScvBelowOne

_WEIGHT_TOL = 1e-12


def _check_weights(weights, rates, what):
    if len(weights) != len(rates) or len(weights) == 0:
        raise SchemaError(f"{what}: weights and rates must be non-empty and of equal length",
                          field="weights")
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > _WEIGHT_TOL:
        raise SchemaError(f"{what}: weights must be nonnegative and sum to 1 "
                          f"(got sum {sum(weights)!r})", field="weights")
    if any(not (r > 0 and math.isfinite(r)) for r in rates):
        raise SchemaError(f"{what}: rates must be positive and finite", field="rates")


def _positive(value, name, what):
    if not (value > 0 and math.isfinite(value)):
        raise SchemaError(f"{what}: {name} must be positive and finite", field=name)


# --------------------------------------------------------------------------
# Arrival distributions


class ArrivalDist:
    """Common interface; concrete classes are frozen dataclasses."""

    admissible = True

    @property
    def intensity(self):
        return 1.0 / self.mean

    def sf(self, w):
        """P(t >= w) = 1 - A(w-); continuous variants inherit 1 - A(w)."""
        return 1.0 - self.cdf(w)

    def density_pieces(self):
        return None

    def derivative_bounds(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ArrivalDist):
    rate: float

    def __post_init__(self):
        _positive(self.rate, "rate", "exponential")

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def sf(self, w):
        w = np.asarray(w, dtype=float)
        return np.exp(-self.rate * np.maximum(w, 0.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def density_pieces(self):
        return [(self.rate, self.rate, 0.0, math.inf)]

    def derivative_bounds(self):
        return self.rate, self.rate**2

    def to_dict(self):
        return {"type": "exp", "rate": self.rate}


@dataclass(frozen=True)
class MixtureExponential(ArrivalDist):
    weights: tuple
    rates: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        _check_weights(self.weights, self.rates, "mixture of exponentials")

    @property
    def mean(self):
        return sum(w / r for w, r in zip(self.weights, self.rates))

    @property
    def variance(self):
        m2 = sum(2 * w / r**2 for w, r in zip(self.weights, self.rates))
        return m2 - self.mean**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        out = sum(w * -np.expm1(-r * xp) for w, r in zip(self.weights, self.rates))
        return np.where(x > 0, out, 0.0)

    def sf(self, w):
        wp = np.maximum(np.asarray(w, dtype=float), 0.0)
        return sum(p * np.exp(-r * wp) for p, r in zip(self.weights, self.rates))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        out = sum(w * r * np.exp(-r * xp) for w, r in zip(self.weights, self.rates))
        return np.where(x >= 0, out, 0.0)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        scale = 1.0 / np.asarray(self.rates)[comp]
        out = rng.exponential(1.0, n) * scale
        return float(out[0]) if size is None else out

    def density_pieces(self):
        return [(w * r, r, 0.0, math.inf) for w, r in zip(self.weights, self.rates)]

    def derivative_bounds(self):
        # density and |density'| are completely monotone, maximal at 0
        a1 = sum(w * r for w, r in zip(self.weights, self.rates))
        a2 = sum(w * r * r for w, r in zip(self.weights, self.rates))
        return a1, a2

    def to_dict(self):
        return {"type": "mix_exp", "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class Gamma(ArrivalDist):
    shape: float
    scale: float

    def __post_init__(self):
        _positive(self.shape, "shape", "gamma")
        _positive(self.scale, "scale", "gamma")

    @property
    def admissible(self):
        return self.shape == 1 or self.shape >= 2

    @property
    def mean(self):
        return self.shape * self.scale

    @property
    def variance(self):
        return self.shape * self.scale**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, special.gammainc(self.shape, np.maximum(x, 0.0) / self.scale), 0.0)

    def sf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w > 0, special.gammaincc(self.shape, np.maximum(w, 0.0) / self.scale), 1.0)

    def pdf(self, x):
        return stats.gamma.pdf(np.asarray(x, dtype=float), self.shape, scale=self.scale)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)

    def derivative_bounds(self):
        if not self.admissible:
            raise Inadmissible(
                f"gamma inter-arrival with shape {self.shape} has an unbounded "
                "density derivative; shape must equal 1 or be at least 2"
            )
        k, th = self.shape, self.scale
        if k == 1:
            return 1.0 / th, 1.0 / th**2
        mode = (k - 1) * th
        a1 = float(self.pdf(mode))
        # f'(x) = f(x) ((k-1)/x - 1/th); its extrema solve f''(x) = 0
        cands = [th * ((k - 1) - math.sqrt(k - 1)), th * ((k - 1) + math.sqrt(k - 1))]
        vals = []
        for x in cands:
            if x > 0:
                vals.append(abs(float(self.pdf(x)) * ((k - 1) / x - 1 / th)))
        if k == 2:
            vals.append(1.0 / th**2)  # limit of f'(x) as x -> 0+
        return a1, max(vals)

    def to_dict(self):
        return {"type": "gamma", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Erlang(ArrivalDist):
    stages: int
    rate: float

    def __post_init__(self):
        if int(self.stages) != self.stages or self.stages < 1:
            raise SchemaError("erlang: stages must be a positive integer", field="stages")
        _positive(self.rate, "rate", "erlang")

    def _gamma(self):
        return Gamma(float(self.stages), 1.0 / self.rate)

    @property
    def mean(self):
        return self.stages / self.rate

    @property
    def variance(self):
        return self.stages / self.rate**2

    def cdf(self, x):
        return self._gamma().cdf(x)

    def sf(self, w):
        return self._gamma().sf(w)

    def pdf(self, x):
        return self._gamma().pdf(x)

    def sample(self, rng, size=None):
        return rng.gamma(self.stages, 1.0 / self.rate, size)

    def density_pieces(self):
        if self.stages == 1:
            return [(self.rate, self.rate, 0.0, math.inf)]
        return None

    def derivative_bounds(self):
        return self._gamma().derivative_bounds()

    def to_dict(self):
        return {"type": "erlang", "stages": int(self.stages), "rate": self.rate}


@dataclass(frozen=True)
class Uniform(ArrivalDist):
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo >= 0 and self.hi > self.lo and math.isfinite(self.hi)):
            raise SchemaError("uniform: need 0 <= lo < hi < inf", field="hi")

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self):
        return (self.hi - self.lo) ** 2 / 12.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x < self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def density_pieces(self):
        return [(1.0 / (self.hi - self.lo), 0.0, self.lo, self.hi)]

    def derivative_bounds(self):
        return 1.0 / (self.hi - self.lo), 0.0

    def to_dict(self):
        return {"type": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Deterministic(ArrivalDist):
    """Constant inter-arrival time.  Simulation only: its CDF is a step."""

    value: float
    admissible = False

    def __post_init__(self):
        _positive(self.value, "value", "deterministic")

    @property
    def mean(self):
        return self.value

    @property
    def variance(self):
        return 0.0

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def sf(self, w):
        # left limit: P(t >= w)
        return np.where(np.asarray(w, dtype=float) <= self.value, 1.0, 0.0)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def derivative_bounds(self):
        raise Inadmissible("deterministic inter-arrival times have no bounded density")

    def to_dict(self):
        return {"type": "deterministic", "value": self.value}


# --------------------------------------------------------------------------
# Patience distributions


class PatienceDist:
    """Bounded patience; ``G(x) = 1`` for ``x >= bound``."""

    def sf(self, v):
        return 1.0 - self.cdf(v)

    def survival_terms(self):
        raise NotImplementedError

    def _sf_from_terms(self, v):
        v = np.asarray(v, dtype=float)
        vc = np.clip(v, 0.0, self.bound)
        out = sum((a + b * vc) * np.exp(-t * vc) for a, b, t in self.survival_terms())
        return np.where(v < 0, 1.0, np.where(v >= self.bound, 0.0, out))


@dataclass(frozen=True)
class TruncatedMixtureExponential(PatienceDist):
    """Mixture of exponentials with the tail beyond ``bound`` moved to an atom at ``bound``."""

    weights: tuple
    rates: tuple
    bound: float

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        _check_weights(self.weights, self.rates, "truncated mixture of exponentials")
        _positive(self.bound, "bound", "truncated mixture of exponentials")

    def cdf(self, x):
        return 1.0 - self._sf_from_terms(x)

    def sf(self, v):
        return self._sf_from_terms(v)

    def survival_terms(self):
        return [(w, 0.0, r) for w, r in zip(self.weights, self.rates)]

    @property
    def atom(self):
        return sum(w * math.exp(-r * self.bound) for w, r in zip(self.weights, self.rates))

    @property
    def mean(self):
        # E[min(Y, bound)] = int_0^bound (1 - G)
        return sum(w * -math.expm1(-r * self.bound) / r for w, r in zip(self.weights, self.rates))

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        raw = rng.exponential(1.0, n) / np.asarray(self.rates)[comp]
        out = np.minimum(raw, self.bound)
        return float(out[0]) if size is None else out

    def to_dict(self):
        return {"type": "trunc_mix_exp", "weights": list(self.weights),
                "rates": list(self.rates), "bound": self.bound}


@dataclass(frozen=True)
class UniformPatience(PatienceDist):
    """Uniform on [0, bound]."""

    bound: float

    def __post_init__(self):
        _positive(self.bound, "bound", "uniform patience")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(x / self.bound, 0.0, 1.0)

    def sf(self, v):
        return 1.0 - self.cdf(v)

    def survival_terms(self):
        return [(1.0, -1.0 / self.bound, 0.0)]

    @property
    def mean(self):
        return 0.5 * self.bound

    def sample(self, rng, size=None):
        return rng.uniform(0.0, self.bound, size)

    def to_dict(self):
        return {"type": "uniform", "bound": self.bound}


@dataclass(frozen=True)
class PointMass(PatienceDist):
    bound: float

    def __post_init__(self):
        _positive(self.bound, "bound", "point mass patience")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.bound, 1.0, 0.0)

    def sf(self, v):
        return 1.0 - self.cdf(v)

    def survival_terms(self):
        return [(1.0, 0.0, 0.0)]

    @property
    def mean(self):
        return self.bound

    def sample(self, rng, size=None):
        if size is None:
            return float(self.bound)
        return np.full(size, float(self.bound))

    def to_dict(self):
        return {"type": "point_mass", "bound": self.bound}


@dataclass(frozen=True)
class ServiceDist:
    """Exponential service, B(x; mu) = 1 - exp(-mu x)."""

    rate: float

    def __post_init__(self):
        _positive(self.rate, "rate", "service")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, 1.0 - np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)


# --------------------------------------------------------------------------
# Module-level operations


def cdf(dist, x):
    out = dist.cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def survival_left(dist, x):
    """1 - A(x-), i.e. P(t >= x)."""
    out = dist.sf(x)
    return float(out) if np.ndim(out) == 0 else out


def sample(dist, rng, size=None):
    return dist.sample(rng, size)


def validate_assumption1(arrival, patience):
    """Return ``(a1, a2, ybar)``: sup |A'|, sup |A''| and the patience bound.

    Raises ``Inadmissible`` when the inter-arrival CDF does not have bounded
    first and second derivatives on [0, inf) or the patience is unbounded.
    """
    if not isinstance(arrival, ArrivalDist):
        raise Inadmissible(f"unsupported inter-arrival distribution {type(arrival).__name__}")
    if not arrival.admissible:
        raise Inadmissible(
            f"{type(arrival).__name__} inter-arrival {arrival.to_dict()} lacks bounded first "
            "and second CDF derivatives on [0, inf); Gamma-type shapes must equal 1 or be >= 2"
        )
    if not isinstance(patience, PatienceDist) or not (patience.bound > 0):
        raise Inadmissible("patience distribution must be bounded: G(bound) = 1 for some bound > 0")
    a1, a2 = arrival.derivative_bounds()
    return float(a1), float(a2), float(patience.bound)


def moment_match_hyperexp2(mean, scv):
    """Balanced-means two-phase hyperexponential with given mean and squared CV."""
    if not mean > 0:
        raise SchemaError("mean must be positive", field="mean")
    if abs(scv - 1.0) <= 1e-9:
        return Exponential(1.0 / mean)
    if scv < 1.0:
        raise ScvBelowOne(f"squared coefficient of variation {scv} < 1 cannot be matched "
                          "by a hyperexponential")
    p = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    return MixtureExponential((p, 1.0 - p), (2.0 * p / mean, 2.0 * (1.0 - p) / mean))


def fit_exponential(samples):
    return Exponential(1.0 / float(np.mean(samples)))


def fit_hyperexp2(samples):
    """Moment-matched H2; falls back to an exponential when the sample SCV <= 1."""
    samples = np.asarray(samples, dtype=float)
    m = float(samples.mean())
    scv = float(samples.var()) / m**2
    if scv <= 1.0:
        return Exponential(1.0 / m)
    return moment_match_hyperexp2(m, scv)


def kolmogorov_sf(x):
    """Asymptotic P(sqrt(n) D_n > x) from the Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    if x < 1.0:
        # Jacobi-theta form converges quickly for small x
        k = np.arange(1, 21)
        cdf_val = math.sqrt(2 * math.pi) / x * float(
            np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x))))
        return float(min(max(1.0 - cdf_val, 0.0), 1.0))
    k = np.arange(1, 101)
    terms = (-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * x * x)
    return float(min(max(2.0 * terms.sum(), 0.0), 1.0))


def ks_statistic(samples, dist):
    """Return ``(D, p)``: sup |F_n - F| and the asymptotic p-value."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("need at least one sample")
    f = np.asarray(dist.cdf(xs), dtype=float)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - f)), float(np.max(f - (i - 1) / n)))
    return d, kolmogorov_sf(math.sqrt(n) * d)


# --------------------------------------------------------------------------
# JSON (de)serialization

_ARRIVAL_FIELDS = {
    "exp": ({"rate"}, lambda d: Exponential(float(d["rate"]))),
    "mix_exp": ({"weights", "rates"},
                lambda d: MixtureExponential(tuple(d["weights"]), tuple(d["rates"]))),
    "gamma": ({"shape", "scale"}, lambda d: Gamma(float(d["shape"]), float(d["scale"]))),
    "erlang": ({"stages", "rate"}, lambda d: Erlang(d["stages"], float(d["rate"]))),
    "uniform": ({"lo", "hi"}, lambda d: Uniform(float(d["lo"]), float(d["hi"]))),
    "deterministic": ({"value"}, lambda d: Deterministic(float(d["value"]))),
}

_PATIENCE_FIELDS = {
    "trunc_mix_exp": ({"weights", "rates", "bound"},
                      lambda d: TruncatedMixtureExponential(tuple(d["weights"]),
                                                            tuple(d["rates"]),
                                                            float(d["bound"]))),
    "uniform": ({"bound"}, lambda d: UniformPatience(float(d["bound"]))),
    "point_mass": ({"bound"}, lambda d: PointMass(float(d["bound"]))),
}


def _from_dict(d, table, what):
    if not isinstance(d, dict) or "type" not in d:
        raise SchemaError(f"{what} must be an object with a 'type' key", field=what)
    kind = d["type"]
    if kind not in table:
        raise SchemaError(f"unknown {what} type '{kind}'", field="type")
    fields, make = table[kind]
    keys = set(d) - {"type"}
    if keys != fields:
        extra = sorted(keys - fields)
        missing = sorted(fields - keys)
        bad = (extra or missing)[0]
        raise SchemaError(f"{what} '{kind}': unexpected keys {extra}, missing keys {missing}",
                          field=bad)
    try:
        return make(d)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{what} '{kind}': {exc}", field="type") from exc


def arrival_from_dict(d):
    return _from_dict(d, _ARRIVAL_FIELDS, "arrival")


def patience_from_dict(d):
    return _from_dict(d, _PATIENCE_FIELDS, "patience")
