import dataclasses

import numpy as np
import pytest

from rankhier.hierarchy import (BuildError, LevelSpec, build, build_level1,
                                build_level2_reduced_complex,
                                build_level2_reduced_real, build_levelN,
                                check_point_feasible, rank_parameter_sweep,
                                reconstruct_at_rank, reduced_point)
from rankhier.linalg import COMPLEX, REAL, fmat
from rankhier.problem import EQ, LinearFunctional, RankSdp
from rankhier.solver import SolverConfig, solve, solve_and_certify


def rand_herm(rng, n, cplx=True):
    m = rng.standard_normal((n, n))
    if cplx:
        m = m + 1j * rng.standard_normal((n, n))
    return (m + m.conj().T) / 2


def diag_problem(n, k=1.0, fld=REAL, seed=0):
    """Max of a random objective over diag-pinned states, rank bounded."""
    rng = np.random.default_rng(seed)
    c = rand_herm(rng, n, cplx=(fld == COMPLEX))
    eye = np.eye(n)
    cons = tuple(
        LinearFunctional(fmat(np.diag(eye[i]), field=fld,
                              symmetry_class="hermitian" if fld == COMPLEX
                              else "symmetric"), 1.0 / n, EQ)
        for i in range(n))
    sym = "hermitian" if fld == COMPLEX else "symmetric"
    return RankSdp(fld, n, fmat(c, field=fld, symmetry_class=sym),
                   constraints=cons, rank_bound_k=float(k))


def value(cp):
    sol = solve(cp)
    assert sol.status == "Optimal", sol.status
    return sol.primal_value


class TestLevelSpec:
    def test_unknown_level_rejected(self):
        with pytest.raises(BuildError):
            LevelSpec("L7")

    def test_too_few_parties_rejected(self):
        with pytest.raises(BuildError):
            LevelSpec("LN", n_parties=1)


class TestLevel1:
    def test_unconstrained_is_top_eigenvalue(self):
        rng = np.random.default_rng(1)
        c = rand_herm(rng, 4)
        p = RankSdp(COMPLEX, 4,
                    fmat(c, field=COMPLEX, symmetry_class="hermitian"))
        v = value(build_level1(p))
        assert abs(v - np.linalg.eigvalsh(c).max()) < 1e-6

    def test_rank_bound_ignored(self):
        p1 = diag_problem(3, k=1.0, seed=2)
        p2 = dataclasses.replace(p1, rank_bound_k=3.0)
        assert abs(value(build_level1(p1)) - value(build_level1(p2))) < 1e-7

    def test_unnormalized_rejected(self):
        p = dataclasses.replace(diag_problem(2), normalized=False)
        with pytest.raises(BuildError):
            build_level1(p)


class TestLevelOrdering:
    def test_l1_dominates_l2_dominates_l3(self):
        for fld, seed in ((REAL, 3), (COMPLEX, 4)):
            p = diag_problem(3, k=1.0, fld=fld, seed=seed)
            v1 = value(build(p, LevelSpec("L1")))
            v2 = value(build(p, LevelSpec("L2Reduced")))
            v3 = value(build_levelN(p, LevelSpec("LN", n_parties=3)))
            assert v1 >= v2 - 1e-6
            assert v2 >= v3 - 1e-6

    def test_reduced_matches_generic_two_party(self):
        # The compressed reduction and the explicit two-party extension with
        # partial-transpose conditions describe the same feasible set.
        for fld, n, k, seed in ((REAL, 3, 1, 5), (COMPLEX, 2, 1, 6),
                                (COMPLEX, 2, 2, 7), (REAL, 2, 2, 8)):
            p = diag_problem(n, k=k, fld=fld, seed=seed)
            vr = value(build(p, LevelSpec("L2Reduced")))
            vn = value(build_levelN(p, LevelSpec("LN", n_parties=2)))
            assert abs(vr - vn) < 1e-6, (fld, n, k, vr, vn)

    def test_compressed_matches_uncompressed(self):
        for fld, seed in ((REAL, 9), (COMPLEX, 10)):
            p = diag_problem(2, k=1.0, fld=fld, seed=seed)
            spec = LevelSpec("LN", n_parties=2)
            vc = value(build_levelN(p, spec, compressed=True))
            vu = value(build_levelN(p, spec, compressed=False))
            assert abs(vc - vu) < 1e-6

    def test_ppt_only_tightens(self):
        p = diag_problem(3, k=1.0, fld=COMPLEX, seed=11)
        v_ppt = value(build_levelN(p, LevelSpec("LN", n_parties=2)))
        v_no = value(build_levelN(p, LevelSpec("LN", n_parties=2, ppt=False)))
        assert v_no >= v_ppt - 1e-7


class TestBuildErrors:
    def test_real_reduction_rejects_complex(self):
        p = diag_problem(2, fld=COMPLEX, seed=12)
        with pytest.raises(BuildError):
            build_level2_reduced_real(p)

    def test_generic_level_needs_integer_rank(self):
        p = diag_problem(2, k=1.5, seed=13)
        with pytest.raises(BuildError):
            build_levelN(p, LevelSpec("LN", n_parties=2))

    def test_reduced_accepts_fractional_rank(self):
        p = diag_problem(2, k=1.5, seed=13)
        v = value(build(p, LevelSpec("L2Reduced")))
        assert np.isfinite(v)


class TestRankSweep:
    def test_monotone_in_k(self):
        p = diag_problem(3, fld=COMPLEX, seed=14)
        ks = [1.0, 1.5, 2.0, 3.0]
        out = rank_parameter_sweep(p, ks)
        vals = [v for _k, v in out]
        for lo, hi in zip(vals, vals[1:]):
            assert hi >= lo - 1e-7

    def test_saturates_at_full_rank(self):
        # k = n removes the rank constraint, so the sweep ends at the L1 value.
        p = diag_problem(3, seed=15)
        out = rank_parameter_sweep(p, [3.0])
        v1 = value(build(p, LevelSpec("L1")))
        assert abs(out[0][1] - v1) < 1e-5

    def test_rejects_tiny_k(self):
        with pytest.raises(BuildError):
            rank_parameter_sweep(diag_problem(2), [0.5])


class TestReducedPoint:
    def solved_point(self, fld, n=3, k=1.5, seed=16):
        p = diag_problem(n, k=k, fld=fld, seed=seed)
        cp = build(p, LevelSpec("L2Reduced"))
        sol = solve(cp)
        assert sol.status == "Optimal"
        return p, reduced_point(cp, sol)

    def test_solution_is_feasible(self):
        for fld in (REAL, COMPLEX):
            p, pt = self.solved_point(fld)
            res = check_point_feasible(p, pt)
            assert res["min_eig"] > -1e-5
            assert res["relation"] < 1e-5
            assert res["norm"] < 1e-5
            assert res["marginal"] < 1e-5

    def test_feasibility_transfers_to_larger_rank(self):
        for fld in (REAL, COMPLEX):
            p, pt = self.solved_point(fld)
            for k_new in (2.0, 2.5, 3.0):
                pt2 = reconstruct_at_rank(pt, k_new)
                p2 = dataclasses.replace(p, rank_bound_k=k_new)
                res = check_point_feasible(p2, pt2)
                assert res["min_eig"] > -1e-5, (fld, k_new, res)
                assert res["relation"] < 1e-4
                assert res["norm"] < 1e-5
                assert res["marginal"] < 1e-4

    def test_shrinking_rank_rejected(self):
        _p, pt = self.solved_point(REAL)
        with pytest.raises(BuildError):
            reconstruct_at_rank(pt, 1.2)

    def test_identity_at_same_rank(self):
        _p, pt = self.solved_point(COMPLEX)
        assert reconstruct_at_rank(pt, pt.k) is pt

    def test_non_reduced_program_rejected(self):
        p = diag_problem(2, seed=17)
        cp = build(p, LevelSpec("L1"))
        sol = solve(cp)
        with pytest.raises(BuildError):
            reduced_point(cp, sol)


class TestCertifiedLevels:
    def test_certified_bound_dominates_value(self):
        for fld, seed in ((REAL, 18), (COMPLEX, 19)):
            p = diag_problem(3, fld=fld, seed=seed)
            sol = solve_and_certify(build(p, LevelSpec("L2Reduced")),
                                    SolverConfig())
            assert sol.certified_bound is not None
            assert sol.certified_bound >= sol.primal_value - 1e-7
