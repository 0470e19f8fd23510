import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from abandonq.lpsolver import (BranchStats, LpProblem, dump_lp, enumerate_segments,
                               solve_lp, solve_milp_sos2, solve_sos2_local_search,
                               sos2_feasible)


def test_examples():
    r = solve_lp(LpProblem([1.0], [[1.0]], (">=",), [1.0]))
    assert r.status == "optimal" and r.x[0] == pytest.approx(1.0) and r.objective == 1.0
    r = solve_lp(LpProblem([-1.0, -1.0], [[1.0, 1.0]], ("<=",), [1.0]))
    assert r.objective == pytest.approx(-1.0)
    r = solve_lp(LpProblem([-1.0], np.zeros((0, 1)), (), []))
    assert r.status == "unbounded"
    r = solve_lp(LpProblem([1.0], [[1.0]], ("<=",), [-1.0]))
    assert r.status == "infeasible"


@st.composite
def random_lps(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 9)), int(rng.integers(1, 8))
    A = rng.normal(size=(m, n)).round(2)
    x0 = rng.uniform(0, 2, n)
    senses = tuple(rng.choice(["<=", "=", ">="], size=m, p=[0.6, 0.2, 0.2]))
    b = A @ x0 + np.where(np.array(senses) == "<=", 0.5, np.where(np.array(senses) == ">=",
                                                                    -0.5, 0.0))
    lo = np.where(rng.random(n) < 0.2, -np.inf, rng.uniform(-1, 0, n))
    hi = np.where(rng.random(n) < 0.5, np.inf, rng.uniform(2, 4, n))
    c = rng.normal(size=n).round(2)
    return LpProblem(c, A, senses, b, lo, hi)


def _scipy(p):
    ub = [(row if s == "<=" else -row) for row, s in zip(p.A, p.senses) if s != "="]
    bu = [(v if s == "<=" else -v) for v, s in zip(p.b, p.senses) if s != "="]
    eq = [row for row, s in zip(p.A, p.senses) if s == "="]
    be = [v for v, s in zip(p.b, p.senses) if s == "="]
    return linprog(p.c, A_ub=np.array(ub) if ub else None, b_ub=bu or None,
                   A_eq=np.array(eq) if eq else None, b_eq=be or None,
                   bounds=list(zip(p.lo, p.hi)), method="highs")


@settings(max_examples=200)
@given(random_lps())
def test_simplex_matches_highs(p):
    ours = solve_lp(p)
    ref = _scipy(p)
    expected = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
    assert ours.status == expected
    if ours.ok:
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7 * max(1, abs(ref.fun)))
        # primal feasibility
        ax = p.A @ ours.x
        for v, s, b in zip(ax, p.senses, p.b):
            if s == "<=":
                assert v <= b + 1e-8
            elif s == ">=":
                assert v >= b - 1e-8
            else:
                assert abs(v - b) <= 1e-8
        assert np.all(ours.x >= p.lo - 1e-9) and np.all(ours.x <= p.hi + 1e-9)
        # strong duality from the final basis
        assert ours.dual_objective == pytest.approx(ours.objective,
                                                    abs=1e-7 * max(1, abs(ours.objective)))


def _pwl_instance(seed, K=3, N=5):
    """Minimise sum_k w_k with w_k >= phi_k(mu_k), sum mu_k <= budget, lambda weights."""
    rng = np.random.default_rng(seed)
    knots = np.linspace(1.0, 3.0, N)
    phis = rng.uniform(0, 1, (K, N))
    n = K * N + 2 * K  # lambdas, mu, w
    c = np.zeros(n)
    c[K * N + K:] = rng.uniform(0.5, 1.5, K)
    rows, senses, b = [], [], []
    for k in range(K):
        lam = slice(k * N, (k + 1) * N)
        row = np.zeros(n)
        row[lam] = 1.0
        rows.append(row), senses.append("="), b.append(1.0)
        row = np.zeros(n)
        row[lam] = knots
        row[K * N + k] = -1.0
        rows.append(row), senses.append("="), b.append(0.0)
        row = np.zeros(n)
        row[lam] = phis[k]
        row[K * N + K + k] = -1.0
        rows.append(row), senses.append("<="), b.append(0.0)
    row = np.zeros(n)
    row[K * N:K * N + K] = 1.0
    rows.append(row), senses.append("<="), b.append(rng.uniform(3.5, 7.0))
    lo = np.concatenate([np.zeros(K * N + K), np.full(K, -np.inf)])
    hi = np.full(n, np.inf)
    hi[:K * N] = 1.0
    sets = [tuple(range(k * N, (k + 1) * N)) for k in range(K)]
    return LpProblem(c, np.array(rows), tuple(senses), b, lo, hi), sets


@pytest.mark.parametrize("seed", range(8))
def test_branch_and_bound_matches_enumeration(seed):
    p, sets = _pwl_instance(seed)
    stats = BranchStats()
    bb = solve_milp_sos2(p, sets, eps_gap=1e-12, stats=stats)
    oracle = enumerate_segments(p, sets)
    assert bb.objective == pytest.approx(oracle.objective, abs=1e-8)
    assert sos2_feasible(bb.x, sets)
    # bounds never decrease from parent to child
    bound = {node: val for node, _, val in stats.trace}
    for node, parent, val in stats.trace:
        if parent >= 0:
            assert val >= bound[parent] - 1e-9


def test_single_segment_is_plain_lp():
    p, sets = _pwl_instance(3, K=2, N=2)
    assert solve_milp_sos2(p, sets).objective == pytest.approx(solve_lp(p).objective,
                                                               abs=1e-12)


def test_v_shape_minimum_at_middle_knot():
    # lambda_0..2 at knots 0,1,2 with phi (1,0,1); mu, w
    A = [[1, 1, 1, 0, 0], [0, 1, 2, -1, 0], [1, 0, 1, 0, -1]]
    p = LpProblem([0, 0, 0, 0, 1], A, ("=", "=", "<="), [1, 0, 0],
                  lo=[0, 0, 0, 0, -np.inf], hi=[1, 1, 1, np.inf, np.inf])
    res = solve_milp_sos2(p, [(0, 1, 2)])
    assert res.objective == pytest.approx(0.0, abs=1e-12)
    assert res.x[3] == pytest.approx(1.0)


def test_sos2_feasibility_checker():
    x = np.array([0.0, 0.3, 0.7, 0.0])
    assert sos2_feasible(x, [(0, 1, 2, 3)])
    assert not sos2_feasible(np.array([0.5, 0.0, 0.5, 0.0]), [(0, 1, 2, 3)])
    assert not sos2_feasible(np.array([0.2, 0.3, 0.5, 0.0]), [(0, 1, 2, 3)])


def test_local_search_is_feasible_and_flagged():
    p, sets = _pwl_instance(5, K=4, N=6)
    res = solve_sos2_local_search(p, sets)
    assert res.heuristic and sos2_feasible(res.x, sets)
    assert res.objective >= enumerate_segments(p, sets).objective - 1e-9


def test_highs_backend_agrees():
    p, sets = _pwl_instance(2)
    a = solve_milp_sos2(p, sets, backend="highs")
    b = solve_milp_sos2(p, sets)
    assert a.objective == pytest.approx(b.objective, abs=1e-8)


def test_dump_lp(tmp_path):
    p, sets = _pwl_instance(0, K=1, N=3)
    dump_lp(p, tmp_path / "lp.txt", sets)
    text = (tmp_path / "lp.txt").read_text().splitlines()
    assert text[0] == f"# vars {p.n_vars} rows {p.n_rows}"
    assert sum(line.startswith("row ") for line in text) == p.n_rows
    assert text[-1].startswith("sos2 ")
