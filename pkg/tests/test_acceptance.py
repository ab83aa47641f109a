"""End-to-end acceptance checks.

Each test covers one headline guarantee of the package, at the tolerances
and time budgets stated in its docstring.  These run the full stack
(problem model, lowering, solver, certification, applications) and check
against independent baselines, so they are slower than the unit suites.
"""

import time

import numpy as np
import pytest

from rankhier import apps
from rankhier.graphs import Graph, erdos_renyi, parse_graph6
from rankhier.hierarchy import (LevelSpec, build, build_levelN,
                                rank_parameter_sweep)
from rankhier.linalg import (COMPLEX, REAL, TensorLayout, fmat,
                             max_entangled_projector, partial_trace,
                             partial_transpose, swap_operator,
                             symmetric_projector, binom_sym_dim)
from rankhier.oracles import enumerate_boolean
from rankhier.problem import EQ, LinearFunctional, RankSdp
from rankhier.solver import solve, solve_and_certify

L1 = LevelSpec("L1")


def _done(name: str, t0: float, budget: float, detail: str):
    dt = time.monotonic() - t0
    print(f"{name}: PASS in {dt:.1f}s (budget {budget:.0f}s) {detail}")
    assert dt < budget, f"{name} exceeded the {budget:.0f}s budget ({dt:.1f}s)"


def test_criterion_1_reference_state_unfaithfulness():
    """Certified two-copy value 0.24888 +- 5e-4 with verdict Unfaithful,
    one-copy value 0.25063 +- 5e-4, within 10 minutes."""
    t0 = time.monotonic()
    rho = apps.reference_unfaithful_state()
    v1 = apps.unfaithfulness_check(rho, level=L1, sample_starts=0)
    assert v1.xi2t == pytest.approx(0.25063, abs=5e-4)
    v2 = apps.unfaithfulness_check(rho)
    assert v2.xi2t == pytest.approx(0.24888, abs=5e-4)
    assert v2.verdict == "Unfaithful"
    assert v2.lower_bound is not None
    assert v2.lower_bound <= v2.xi2t + 1e-6
    _done("criterion 1", t0, 600.0,
          f"xi1={v1.xi2t:.5f} xi2T={v2.xi2t:.5f} verdict={v2.verdict}")


def test_criterion_2_theta_and_orthonormal_representation():
    """theta of the 11-vertex example is 4 +- 1e-5 and its 4-dimensional
    orthonormal representation is excluded over both fields, within 5
    minutes."""
    t0 = time.monotonic()
    g = parse_graph6("Jzl[kWq_YE?")
    theta = apps.lovasz_theta(g)
    assert theta == pytest.approx(4.0, abs=1e-5)
    verdicts = {}
    for fld in (REAL, COMPLEX):
        rep = apps.orthonormal_rep_check(g, 4, fld=fld)
        verdicts[fld] = rep.verdict
        assert rep.verdict == "ExcludedAtLevel2", (fld, rep)
        assert rep.certified
    _done("criterion 2", t0, 300.0,
          f"theta={theta:.6f} verdicts={verdicts}")


def test_criterion_3_maxcut_sandwich_on_random_graphs():
    """100 seeded random graphs (n <= 10, p = 0.5): brute <= two-copy <=
    one-copy holds on all (1e-6) and the two-copy bound matches brute force
    on at least 95 (1e-5), within 30 minutes."""
    t0 = time.monotonic()
    sandwich_ok = 0
    tight = 0
    total = 100
    for seed in range(total):
        n = 4 + seed % 7  # 4..10
        g = erdos_renyi(n, 0.5, np.random.default_rng(seed))
        brute = apps.maxcut_bruteforce(g)
        xi2 = apps.maxcut_bound(g).value
        xi1 = apps.maxcut_bound(g, level=L1).value
        if brute <= xi2 + 1e-6 and xi2 <= xi1 + 1e-6:
            sandwich_ok += 1
        if abs(xi2 - brute) <= 1e-5:
            tight += 1
    assert sandwich_ok == total, f"sandwich held on {sandwich_ok}/{total}"
    assert tight >= 95, f"two-copy tight on only {tight}/{total}"
    _done("criterion 3", t0, 1800.0,
          f"sandwich {sandwich_ok}/{total}, tight {tight}/{total}")


def test_criterion_4_boolean_least_squares_quality():
    """200 Gaussian 8x6 least-squares instances: the two-copy lower bound
    captures >= 99% of the exact optimum on average while the one-copy
    bound captures <= 80%, within 20 minutes."""
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    r2 = []
    r1 = []
    for _ in range(200):
        a = rng.standard_normal((8, 6))
        # Consistent Gaussian right-hand side: the unconstrained problem is
        # solvable exactly, so the whole optimum comes from the +-1 clamp.
        b_vec = a @ rng.standard_normal(6)
        q = a.T @ a
        c = -2.0 * a.T @ b_vec
        const = float(b_vec @ b_vec)
        exact = enumerate_boolean((q, c, const), 6, sense="min").value
        xi2 = apps.boolean_least_squares(a, b_vec).value
        xi1 = apps.boolean_least_squares(a, b_vec, level=L1).value
        r2.append(xi2 / exact)
        r1.append(xi1 / exact)
    m2, m1 = float(np.mean(r2)), float(np.mean(r1))
    assert m2 >= 0.99, f"two-copy mean ratio {m2:.4f}"
    assert m1 <= 0.80, f"one-copy mean ratio {m1:.4f}"
    _done("criterion 4", t0, 1200.0, f"mean ratios L2={m2:.4f} L1={m1:.4f}")


def _random_instance(n, k, fld, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((n, n))
    if fld == COMPLEX:
        c = c + 1j * rng.standard_normal((n, n))
    c = (c + c.conj().T) / 2
    eye = np.eye(n)
    sym = "hermitian" if fld == COMPLEX else "symmetric"
    cons = tuple(LinearFunctional(
        fmat(np.diag(eye[i]), field=fld, symmetry_class=sym), 1.0 / n, EQ)
        for i in range(n))
    return RankSdp(fld, n, fmat(c, field=fld, symmetry_class=sym),
                   constraints=cons, rank_bound_k=float(k))


def test_criterion_5_hierarchy_consistency():
    """25 instances with n*k <= 6: levels 1 >= 2 >= 3 up to 1e-6, the
    compressed two-copy reduction matches the explicit two-party extension
    at 1e-6, and the rank sweep is monotone at 1e-7, within 15 minutes."""
    t0 = time.monotonic()
    shapes = [(2, 1), (2, 2), (3, 1), (3, 2), (4, 1)]
    count = 0
    for i, (n, k) in enumerate(shapes):
        for j in range(5):
            fld = COMPLEX if (i + j) % 2 == 0 else REAL
            p = _random_instance(n, k, fld, seed=100 + 10 * i + j)
            v1 = solve(build(p, L1)).primal_value
            v2 = solve(build(p, LevelSpec("L2Reduced"))).primal_value
            v3 = solve(build_levelN(
                p, LevelSpec("LN", n_parties=3))).primal_value
            assert v1 - v2 >= -1e-6, (n, k, fld, v1, v2)
            assert v2 - v3 >= -1e-6, (n, k, fld, v2, v3)
            vn = solve(build_levelN(
                p, LevelSpec("LN", n_parties=2))).primal_value
            assert abs(v2 - vn) < 1e-6, (n, k, fld, v2, vn)
            sweep = rank_parameter_sweep(p, [1.0, 1.5, float(min(2, n))])
            vals = [v for _kk, v in sweep]
            for lo, hi in zip(vals, vals[1:]):
                assert hi >= lo - 1e-7, (n, k, fld, vals)
            count += 1
    _done("criterion 5", t0, 900.0, f"{count} instances consistent")


def test_criterion_6_two_party_operator_identities():
    """Swap/partial-transpose/marginal identities hold to 1e-12 for local
    dimensions up to 4 and up to 3 copies, within 1 minute."""
    t0 = time.monotonic()
    for d in (2, 3, 4):
        v = swap_operator(d)
        pt = partial_transpose(v, TensorLayout((d, d)), (0,))
        target = d * max_entangled_projector(d).data
        assert np.max(np.abs(pt.data - target)) < 1e-12
        marg = partial_trace(v, TensorLayout((d, d)), keep=(1,))
        assert np.max(np.abs(marg.data - np.eye(d))) < 1e-12
        for n_copies in (2, 3):
            p = symmetric_projector(d, n_copies).data
            assert np.max(np.abs(p @ p - p)) < 1e-12
            assert abs(np.trace(p) - binom_sym_dim(d, n_copies)) < 1e-12
    _done("criterion 6", t0, 60.0, "d in {2,3,4}, up to 3 copies")


def test_criterion_7_certified_bounds_never_undercut():
    """Certified bounds dominate exhaustive baselines with zero violations
    at 1e-9: eigenvalue programs against dense eigensolves and Max-Cut
    certificates against brute force."""
    t0 = time.monotonic()
    violations = 0
    checks = 0
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        c = rng.standard_normal((n, n))
        c = (c + c.T) / 2
        p = RankSdp(REAL, n, fmat(c, field=REAL, symmetry_class="symmetric"))
        sol = solve_and_certify(build(p, L1))
        exact = float(np.linalg.eigvalsh(c).max())
        checks += 1
        if sol.certified_bound is None or sol.certified_bound < exact - 1e-9:
            violations += 1
    for seed in range(15):
        g = erdos_renyi(6, 0.5, np.random.default_rng(200 + seed))
        if g.n_edges == 0:
            continue
        b = apps.maxcut_bound(g)
        brute = apps.maxcut_bruteforce(g)
        checks += 1
        if b.certified is None or b.certified < brute - 1e-9:
            violations += 1
    assert violations == 0, f"{violations}/{checks} certified bounds undercut"
    _done("criterion 7", t0, 600.0, f"{checks} checks, 0 violations")
