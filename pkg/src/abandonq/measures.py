"""Performance functions g(xi, mu) and their finite-approximation expectations.

Each measure averages over the exponential service time of the customer
whose offered wait is ``xi``.  All integrals against 1 - G reduce to
``exp_moments`` because every patience variant exposes survival terms of
the form (alpha + beta v) e^{-theta v}.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .chain import EVAL_SCHEME, StationaryVector, build_chain, stationary_vector
from .errors import SchemaError, UnboundedVariation
from .quadrature import exp_moments


class MeasureKind:
    name = "measure"

    def g(self, queue, xi, mu):
        raise NotImplementedError

    def to_dict(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class OfferedSojourn(MeasureKind):
    """Offered wait plus the mean service time."""

    name = "offered_sojourn"

    def g(self, queue, xi, mu):
        return np.asarray(xi, dtype=float) + 1.0 / mu


@dataclass(frozen=True)
class AbandonmentProb(MeasureKind):
    """P(patience runs out before service ends): int mu e^{-mu s} G(xi + s) ds."""

    name = "abandonment"

    def g(self, queue, xi, mu):
        pat = queue.patience
        xi = np.clip(np.asarray(xi, dtype=float), 0.0, pat.bound)
        width = pat.bound - xi
        served = 0.0
        for alpha, beta, theta in pat.survival_terms():
            e0, e1 = exp_moments(mu + theta, width)
            served = served + mu * np.exp(-theta * xi) * ((alpha + beta * xi) * e0 + beta * e1)
        return 1.0 - served


@dataclass(frozen=True)
class TailWait(MeasureKind):
    """P(offered wait plus service exceeds ``threshold``)."""

    threshold: float
    name = "tail_wait"

    def __post_init__(self):
        if not self.threshold >= 0:
            raise SchemaError("tail-wait threshold must be >= 0", field="threshold")

    def g(self, queue, xi, mu):
        gap = np.maximum(self.threshold - np.asarray(xi, dtype=float), 0.0)
        return np.exp(-mu * gap)

    def to_dict(self):
        return {"kind": self.name, "threshold": self.threshold}


@dataclass(frozen=True)
class AvgQueueLength(MeasureKind):
    """lambda * E[min(y, xi + s)] (Little's law on time spent in system)."""

    name = "queue_length"

    def g(self, queue, xi, mu):
        pat = queue.patience
        xi = np.clip(np.asarray(xi, dtype=float), 0.0, pat.bound)
        width = pat.bound - xi
        total = 0.0
        for alpha, beta, theta in pat.survival_terms():
            a0, a1 = exp_moments(theta, xi)
            b0, b1 = exp_moments(mu + theta, width)
            total = total + alpha * a0 + beta * a1
            total = total + np.exp(-theta * xi) * ((alpha + beta * xi) * b0 + beta * b1)
        return queue.intensity * total


@dataclass(frozen=True)
class Custom(MeasureKind):
    """Tabulated h on [0, ybar], linearly interpolated, averaged over service.

    g(xi) = int_0^inf mu e^{-mu s} h(min(xi + s, ybar)) ds, evaluated exactly
    segment by segment.
    """

    grid: tuple
    values: tuple
    name = "custom"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        if len(self.grid) != len(self.values) or len(self.grid) < 1:
            raise SchemaError("custom table needs matching non-empty grid/values", field="values")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise SchemaError("custom table grid must be strictly increasing", field="grid")

    @property
    def finite(self):
        return all(math.isfinite(v) for v in self.values)

    def h(self, v):
        return np.interp(v, self.grid, self.values)

    def g(self, queue, xi, mu):
        ybar = queue.bound
        xi = np.clip(np.asarray(xi, dtype=float), 0.0, ybar)
        if min(self.values) == max(self.values):
            return np.full(xi.shape, self.values[0])
        knots = np.unique(np.clip(np.concatenate([[0.0, ybar], self.grid]), 0.0, ybar))
        hv = self.h(knots)
        out = np.exp(-mu * (ybar - xi)) * float(self.h(ybar))
        for a, b, ha, hb in zip(knots[:-1], knots[1:], hv[:-1], hv[1:]):
            slope = (hb - ha) / (b - a)
            start = np.maximum(a, xi)
            width = np.maximum(b - start, 0.0)
            e0, e1 = exp_moments(mu, width)
            level = ha + slope * (start - a)
            out = out + mu * np.exp(-mu * (start - xi)) * (level * e0 + slope * e1)
        return out

    def to_dict(self):
        return {"kind": self.name, "grid": list(self.grid), "values": list(self.values)}


@dataclass(frozen=True)
class OfferedWait(MeasureKind):
    """The offered waiting time itself."""

    name = "offered_wait"

    def g(self, queue, xi, mu):
        return np.asarray(xi, dtype=float) * 1.0


@dataclass(frozen=True)
class WaitingAbandonment(MeasureKind):
    """P(y < xi): the customer dies before reaching the head of the line."""

    name = "waiting_abandonment"

    def g(self, queue, xi, mu):
        pat = queue.patience
        xi = np.asarray(xi, dtype=float)
        xc = np.clip(xi, 0.0, pat.bound)
        alive = sum((a + b * xc) * np.exp(-t * xc) for a, b, t in pat.survival_terms())
        return np.where(xi <= 0, 0.0, np.where(xi > pat.bound, 1.0, 1.0 - alive))


_SIMPLE = {cls.name: cls for cls in (OfferedSojourn, AbandonmentProb, AvgQueueLength,
                                     OfferedWait, WaitingAbandonment)}


def measure_from_dict(d):
    if isinstance(d, str):
        d = {"kind": d}
    kind = d.get("kind")
    keys = set(d) - {"kind"}
    if kind in _SIMPLE:
        if keys:
            raise SchemaError(f"measure '{kind}' takes no parameters", field=sorted(keys)[0])
        return _SIMPLE[kind]()
    if kind == "tail_wait":
        if keys != {"threshold"}:
            raise SchemaError("tail_wait needs exactly 'threshold'", field="threshold")
        return TailWait(float(d["threshold"]))
    if kind == "custom":
        if keys == {"csv"}:
            return load_custom_csv(d["csv"])
        if keys != {"grid", "values"}:
            raise SchemaError("custom measure needs 'grid' and 'values' (or 'csv')", field="grid")
        return Custom(tuple(d["grid"]), tuple(d["values"]))
    raise SchemaError(f"unknown measure kind {kind!r}", field="kind")


def load_custom_csv(path):
    """Read (xi, value) rows; a non-numeric first row is treated as a header."""
    grid, values = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                x, v = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise SchemaError(f"bad custom table row {row!r}", line=i + 1, field="csv")
            grid.append(x)
            values.append(v)
    return Custom(tuple(grid), tuple(values))


def g_eval(kind, queue, xi, mu):
    out = kind.g(queue, xi, mu)
    return float(out) if np.ndim(out) == 0 else out


def expected_measure(kind, queue, chain, sv):
    """sum_i g(c_i, mu) v_i on the chain's own service rate."""
    v = sv.v if isinstance(sv, StationaryVector) else np.asarray(sv)
    return float(np.dot(kind.g(queue, chain.states, chain.mu), v))


def finite_measures(queue, mu, kinds, r, *, scheme=EVAL_SCHEME, threads=1, method="auto"):
    """Finite-approximation values {name: E g} from one order-``r`` chain."""
    chain = build_chain(queue, mu, r, scheme=scheme, threads=threads)
    sv = stationary_vector(chain, method=method)
    return {k.name: expected_measure(k, queue, chain, sv) for k in kinds}


def total_variation(values):
    return float(np.sum(np.abs(np.diff(values))))


def validate_assumption23(kind, queue, mu_range, n_grid=10_000, n_mu=21):
    """Numeric total variation in xi (max over a mu grid) and Lipschitz-in-mu estimate."""
    if isinstance(kind, Custom) and not kind.finite:
        raise UnboundedVariation("custom table contains non-finite values")
    xi = np.linspace(0.0, queue.bound, n_grid)
    mus = np.linspace(mu_range[0], mu_range[1], n_mu)
    rows = np.array([kind.g(queue, xi, m) for m in mus])
    if not np.all(np.isfinite(rows)):
        raise UnboundedVariation(f"measure {kind.name} is not finite on the state range")
    tv = max(total_variation(row) for row in rows)
    if n_mu > 1:
        lip = float(np.max(np.abs(np.diff(rows, axis=0)) / np.diff(mus)[:, None]))
    else:
        lip = 0.0
    return tv, lip
