"""Dense LP solver (bounded-variable two-phase simplex) and SOS2 branch and bound.

Problems here are small (at most a few thousand columns), so a dense
tableau with periodic refactorization is simple and fast enough.
"""

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Infeasible, NodeLimit, NumericalFailure

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"
PIVOT_MIN = 1e-11
PIVOT_TOL = 1e-7
SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class LpProblem:
    """min c^T x  s.t.  A x (sense) b,  lo <= x <= hi."""

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lo: np.ndarray = None
    hi: np.ndarray = None
    names: tuple = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        senses = tuple(self.senses)
        lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).copy()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).copy()
        if A.shape[0] != b.size or len(senses) != b.size or lo.size != n or hi.size != n:
            raise ValueError("inconsistent LP dimensions")
        bad = [s for s in senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown constraint sense {bad[0]!r}")
        for name, val in (("c", c), ("A", A), ("b", b)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.b.size

    def with_bounds(self, lo=None, hi=None):
        return replace(self, lo=self.lo if lo is None else lo, hi=self.hi if hi is None else hi)


@dataclass
class LpResult:
    status: str
    x: np.ndarray = None
    objective: float = math.nan
    dual_objective: float = math.nan
    iterations: int = 0
    heuristic: bool = False
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


# ---------------------------------------------------------------- simplex core


class _Tableau:
    """Bounded simplex on  min c x, A x = b, 0 <= x <= u  with a given starting basis."""

    def __init__(self, A, b, c, u, basis, tol):
        self.A = A
        self.b = b
        self.u = u
        self.tol = tol
        self.m, self.n = A.shape
        self.basis = np.array(basis, dtype=int)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.c = c
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.A)
            rhs = self.b - self.A[:, self.at_upper] @ self.u[self.at_upper]
            self.beta = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular simplex basis: {exc}") from exc
        self.since_refactor = 0

    def values(self):
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.beta
        return x

    def reduced_costs(self):
        return self.c - self.c[self.basis] @ self.T

    def run(self, max_iter, bland_after=50):
        tol = self.tol
        bland = False
        degenerate = 0
        is_basic = np.zeros(self.n, dtype=bool)
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"simplex hit the iteration limit {max_iter}")
            is_basic[:] = False
            is_basic[self.basis] = True
            d = self.reduced_costs()
            gain = np.where(self.at_upper, d, -d)
            gain[is_basic] = 0.0
            gain[self.u <= 0.0] = 0.0  # fixed columns never move
            cand = np.flatnonzero(gain > tol)
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0]) if bland else int(cand[np.argmax(gain[cand])])
            direction = -1.0 if self.at_upper[j] else 1.0
            col = self.T[:, j] * direction
            # basic x_B moves by -t * col
            step = self.u[j]
            row = -1
            to_upper = False
            best_piv = 0.0
            # entries below the pivot tolerance are treated as zeros
            ptol = PIVOT_TOL * max(1.0, float(np.abs(col).max(initial=0.0)))
            down = col > ptol
            up = col < -ptol
            ub = self.u[self.basis]
            up_ok = up & np.isfinite(ub)
            room = np.full(self.m, np.inf)
            room[down] = np.maximum(self.beta[down], 0.0)
            room[up_ok] = np.maximum(ub[up_ok] - self.beta[up_ok], 0.0)
            mag = np.where(down | up_ok, np.abs(col), 1.0)
            ratios = room / mag
            ratios[~(down | up_ok)] = np.inf
            rmin = float(ratios.min()) if self.m else np.inf
            if rmin < step:
                if bland:
                    ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, rmin))
                    row = int(ties[np.argmin(self.basis[ties])])
                else:
                    # Harris: relax bounds by tol, then take the largest pivot
                    relaxed = float(np.min((room + tol) / mag))
                    ties = np.flatnonzero(ratios <= relaxed)
                    row = int(ties[np.argmax(np.abs(col[ties]))])
                step = float(ratios[row])
                to_upper = bool(col[row] < 0)
                best_piv = abs(self.T[row, j])
            if not np.isfinite(step):
                return UNBOUNDED
            self.iterations += 1
            if step <= tol:
                degenerate += 1
                if degenerate >= bland_after:
                    bland = True
            else:
                degenerate = 0
            self.beta -= step * col
            if row < 0:
                # entering variable hits its own opposite bound
                self.at_upper[j] = not self.at_upper[j]
                continue
            if best_piv < PIVOT_MIN:
                raise NumericalFailure(f"pivot magnitude {best_piv:.2e} below {PIVOT_MIN:g}")
            leaving = self.basis[row]
            self.at_upper[leaving] = to_upper
            entering_value = (self.u[j] if self.at_upper[j] else 0.0) + direction * step
            self.at_upper[j] = False
            self._pivot(row, j)
            self.beta[row] = entering_value
            self.since_refactor += 1
            if self.since_refactor >= 100:
                self.refactor()

    def _pivot(self, row, j):
        piv = self.T[row, j]
        self.T[row] /= piv
        colj = self.T[:, j].copy()
        colj[row] = 0.0
        self.T -= np.outer(colj, self.T[row])
        self.basis[row] = j


def _standardize(p):
    """Map to  min c x + const, A x = b, 0 <= x <= u.  Returns (A, b, c, u, const, recover)."""
    n = p.n_vars
    lo, hi = p.lo, p.hi
    if np.any(lo > hi):
        return None
    cols = []  # (orig index, sign, offset) per internal column
    uppers = []
    offset = np.zeros(n)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            uppers.append(hi[j] - lo[j])
        elif np.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append((j, -1.0))
            uppers.append(np.inf)
        else:
            cols.append((j, 1.0))
            uppers.append(np.inf)
            cols.append((j, -1.0))
            uppers.append(np.inf)
    nc = len(cols)
    M = np.zeros((n, nc))
    for k, (j, sgn) in enumerate(cols):
        M[j, k] = sgn
    A = p.A @ M
    b = p.b - p.A @ offset
    c = M.T @ p.c
    const = float(p.c @ offset)
    m = p.n_rows
    slack_sign = np.array([{"<=": 1.0, "=": 0.0, ">=": -1.0}[s] for s in p.senses])
    slack_rows = np.flatnonzero(slack_sign != 0)
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = slack_sign[slack_rows]
    A = np.hstack([A, S])
    c = np.concatenate([c, np.zeros(slack_rows.size)])
    u = np.concatenate([uppers, np.full(slack_rows.size, np.inf)])
    flip = b < 0
    A[flip] *= -1.0
    b = np.where(flip, -b, b)

    def recover(xi):
        return offset + M @ xi[:nc]

    return A, b, c, u, const, recover, nc


def _simplex(p, tol, max_iter):
    std = _standardize(p)
    if std is None:
        return LpResult(INFEASIBLE)
    A, b, c, u, const, recover, _ = std
    m, n = A.shape
    # rows whose slack has coefficient +1 can start with the slack basic
    basis = np.full(m, -1)
    for k in range(n):
        col = A[:, k]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] < 0 and c[k] == 0 and np.isinf(u[k]):
            basis[nz[0]] = k
    need = np.flatnonzero(basis < 0)
    art = np.zeros((m, need.size))
    art[need, np.arange(need.size)] = 1.0
    basis[need] = n + np.arange(need.size)
    A1 = np.hstack([A, art])
    u1 = np.concatenate([u, np.full(need.size, np.inf)])
    iters = 0
    if need.size:
        c1 = np.concatenate([np.zeros(n), np.ones(need.size)])
        tab = _Tableau(A1, b, c1, u1, basis, tol)
        tab.run(max_iter)
        iters = tab.iterations
        infeas = float(c1 @ tab.values())
        if infeas > tol * max(1.0, float(np.abs(b).max(initial=0.0))) * 10:
            return LpResult(INFEASIBLE, iterations=iters, info={"phase1": infeas})
        basis, at_upper, keep = _drive_out_artificials(tab, n)
        A2, b2 = A[keep], b[keep]
    else:
        at_upper = np.zeros(n, dtype=bool)
        A2, b2 = A, b
    tab = _Tableau(A2, b2, c, u, basis, tol)
    tab.at_upper[:] = at_upper
    tab.refactor()
    tab.iterations = iters
    status = tab.run(max_iter)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, iterations=tab.iterations)
    xi = tab.values()
    x = recover(xi)
    obj = float(c @ xi) + const
    dual = _dual_objective(A2, b2, c, u, tab) + const
    return LpResult(OPTIMAL, x, obj, dual, tab.iterations)


def _drive_out_artificials(tab, n):
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    keep = np.ones(tab.m, dtype=bool)
    for row in range(tab.m):
        if tab.basis[row] < n:
            continue
        cand = np.flatnonzero(np.abs(tab.T[row, :n]) > 1e-7)
        cand = cand[~np.isin(cand, tab.basis)]
        if cand.size:
            k = int(cand[np.argmax(np.abs(tab.T[row, cand]))])
            value = tab.u[k] if tab.at_upper[k] else 0.0
            tab.at_upper[k] = False
            tab._pivot(row, k)
            tab.beta[row] = value
        else:
            keep[row] = False
    return tab.basis[keep].copy(), tab.at_upper[:n].copy(), keep


def _dual_objective(A, b, c, u, tab):
    """b^T y + sum_j min(0, d_j) u_j with y from B^T y = c_B (dual of the bounded form)."""
    B = A[:, tab.basis]
    y = np.linalg.solve(B.T, c[tab.basis])
    d = c - A.T @ y
    d[tab.basis] = 0.0
    upper_part = np.where(d < 0, d * np.where(np.isfinite(u), u, 0.0), 0.0)
    return float(b @ y + upper_part.sum())


def _highs(p):
    from scipy.optimize import linprog

    ub_rows = [i for i, s in enumerate(p.senses) if s != "="]
    eq_rows = [i for i, s in enumerate(p.senses) if s == "="]
    sign = np.array([1.0 if p.senses[i] == "<=" else -1.0 for i in ub_rows])
    kw = {}
    if ub_rows:
        kw["A_ub"] = p.A[ub_rows] * sign[:, None]
        kw["b_ub"] = p.b[ub_rows] * sign
    if eq_rows:
        kw["A_eq"] = p.A[eq_rows]
        kw["b_eq"] = p.b[eq_rows]
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(z) else z)
              for a, z in zip(p.lo, p.hi)]
    res = linprog(p.c, bounds=bounds, method="highs", **kw)
    if res.status == 2:
        return LpResult(INFEASIBLE)
    if res.status == 3:
        return LpResult(UNBOUNDED)
    if res.status != 0:
        raise NumericalFailure(f"HiGHS failed: {res.message}")
    return LpResult(OPTIMAL, res.x, float(res.fun), float(res.fun), int(res.nit))


def solve_lp(p, tol=1e-9, *, backend="simplex", max_iter=100_000):
    """Solve ``p``; status is "optimal", "infeasible" or "unbounded".

    ``backend="highs"`` delegates to scipy's HiGHS (used as a cross-check
    and for large batches of bound LPs).
    """
    if backend == "highs":
        return _highs(p)
    if backend != "simplex":
        raise ValueError(f"unknown LP backend {backend!r}")
    return _simplex(p, tol, max_iter)


# ---------------------------------------------------------------- SOS2


def sos2_feasible(x, sets, tol=1e-9):
    for s in sets:
        nz = np.flatnonzero(np.abs(x[list(s)]) > tol)
        if nz.size > 2 or (nz.size == 2 and nz[1] - nz[0] != 1):
            return False
    return True


def _branch_set(x, sets, tol):
    """First SOS2 violation as (set index, split position) or None."""
    for k, s in enumerate(sets):
        vals = np.abs(x[list(s)])
        nz = np.flatnonzero(vals > tol)
        if nz.size > 2 or (nz.size == 2 and nz[1] - nz[0] != 1):
            f, l = int(nz[0]), int(nz[-1])
            centre = float(np.dot(np.arange(len(s)), vals) / vals.sum())
            r = min(max(int(round(centre)), f + 1), l - 1)
            return k, r
    return None


@dataclass
class BranchStats:
    nodes: int = 0
    trace: list = field(default_factory=list)  # (node id, parent id, bound)


def solve_milp_sos2(p, sets, eps_gap=1e-9, *, node_limit=200_000, tol=1e-9,
                    backend="simplex", stats=None):
    """Best-first branch and bound on SOS2 violations.

    Each node tightens upper bounds of set members to 0.  The split at
    position r keeps members f..r on the left child and r..l on the right,
    so every adjacent pair survives in at least one child.
    """
    stats = stats if stats is not None else BranchStats()
    sets = [tuple(int(i) for i in s) for s in sets]
    root = solve_lp(p, tol, backend=backend)
    stats.nodes = 1
    if root.status != OPTIMAL:
        return root
    stats.trace.append((0, -1, root.objective))
    heap = [(root.objective, 0, p.hi, root)]
    incumbent = None
    next_id = 1
    iterations = root.iterations
    while heap:
        bound, node_id, hi, res = heapq.heappop(heap)
        if incumbent is not None and bound >= incumbent.objective - eps_gap:
            break
        split = _branch_set(res.x, sets, 1e-9)
        if split is None:
            if incumbent is None or res.objective < incumbent.objective:
                incumbent = res
            continue
        k, r = split
        members = sets[k]
        for side in (members[r + 1:], members[:r]):
            child_hi = hi.copy()
            child_hi[list(side)] = 0.0
            stats.nodes += 1
            if stats.nodes > node_limit:
                raise NodeLimit(f"branch and bound exceeded {node_limit} nodes")
            child = solve_lp(p.with_bounds(hi=child_hi), tol, backend=backend)
            iterations += child.iterations
            if child.status != OPTIMAL:
                continue
            stats.trace.append((next_id, node_id, child.objective))
            if incumbent is None or child.objective < incumbent.objective - eps_gap:
                heapq.heappush(heap, (child.objective, next_id, child_hi, child))
            next_id += 1
    if incumbent is None:
        return LpResult(INFEASIBLE, iterations=iterations, info={"nodes": stats.nodes})
    incumbent.iterations = iterations
    incumbent.info["nodes"] = stats.nodes
    return incumbent


def solve_sos2_local_search(p, sets, *, tol=1e-9, backend="simplex", max_rounds=50):
    """Heuristic: restrict every set to one segment and improve by one-step moves."""
    sets = [tuple(int(i) for i in s) for s in sets]
    root = solve_lp(p, tol, backend=backend)
    if root.status != OPTIMAL:
        return root
    seg = []
    for s in sets:
        vals = np.abs(root.x[list(s)])
        centre = float(np.dot(np.arange(len(s)), vals) / max(vals.sum(), 1e-300))
        seg.append(min(int(centre), len(s) - 2))

    def solve(assign):
        hi = p.hi.copy()
        for s, a in zip(sets, assign):
            idx = [i for pos, i in enumerate(s) if pos not in (a, a + 1)]
            hi[idx] = 0.0
        return solve_lp(p.with_bounds(hi=hi), tol, backend=backend)

    best = solve(seg)
    for _ in range(max_rounds):
        improved = False
        for k, s in enumerate(sets):
            for move in (-1, 1):
                cand = list(seg)
                cand[k] += move
                if not 0 <= cand[k] <= len(s) - 2:
                    continue
                res = solve(cand)
                if res.ok and (not best.ok or res.objective < best.objective - tol):
                    best, seg, improved = res, cand, True
        if not improved:
            break
    if not best.ok:
        raise Infeasible("segment-restricted local search found no feasible assignment")
    best.heuristic = True
    return best


def enumerate_segments(p, sets, *, tol=1e-9, backend="simplex"):
    """Brute force over every segment assignment (testing oracle)."""
    import itertools

    sets = [tuple(int(i) for i in s) for s in sets]
    best = LpResult(INFEASIBLE)
    for assign in itertools.product(*[range(len(s) - 1) for s in sets]):
        hi = p.hi.copy()
        for s, a in zip(sets, assign):
            hi[[i for pos, i in enumerate(s) if pos not in (a, a + 1)]] = 0.0
        res = solve_lp(p.with_bounds(hi=hi), tol, backend=backend)
        if res.ok and (not best.ok or res.objective < best.objective):
            best = res
    return best


def dump_lp(p, path, sets=()):
    """Plain-text tabular dump: one line per row, then bounds and SOS2 sets."""
    names = p.names or tuple(f"x{j}" for j in range(p.n_vars))
    with open(path, "w") as fh:
        fh.write(f"# vars {p.n_vars} rows {p.n_rows}\n")
        fh.write("obj " + " ".join(f"{v:.17g}" for v in p.c) + "\n")
        for a, s, b in zip(p.A, p.senses, p.b):
            fh.write("row " + " ".join(f"{v:.17g}" for v in a) + f" {s} {b:.17g}\n")
        for name, lo, hi in zip(names, p.lo, p.hi):
            fh.write(f"bound {name} {lo:.17g} {hi:.17g}\n")
        for s in sets:
            fh.write("sos2 " + " ".join(names[i] for i in s) + "\n")
