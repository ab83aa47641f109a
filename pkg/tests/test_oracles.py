import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankhier.linalg import (COMPLEX, REAL, fmat, max_entangled_projector)
from rankhier.oracles import (ENUM_LIMIT, enumerate_boolean,
                              sample_max_entangled, sample_pure_states)
from rankhier.problem import EQ, LinearFunctional, RankSdp


class TestEnumerateBoolean:
    def test_quadratic_matches_callable(self):
        rng = np.random.default_rng(0)
        q = rng.standard_normal((5, 5))
        q = (q + q.T) / 2
        c = rng.standard_normal(5)
        fast = enumerate_boolean((q, c, 1.5), 5)
        slow = enumerate_boolean(lambda x: x @ q @ x + c @ x + 1.5, 5)
        assert abs(fast.value - slow.value) < 1e-12
        np.testing.assert_allclose(fast.witness, slow.witness, atol=0)

    def test_witness_attains_value(self):
        rng = np.random.default_rng(1)
        q = rng.standard_normal((6, 6))
        q = (q + q.T) / 2
        res = enumerate_boolean((q, np.zeros(6), 0.0), 6)
        x = res.witness
        assert set(np.unique(x)) <= {-1.0, 1.0}
        assert abs(x @ q @ x - res.value) < 1e-10

    def test_min_sense(self):
        q = np.array([[0.0, 1.0], [1.0, 0.0]])
        res = enumerate_boolean((q, np.zeros(2), 0.0), 2, sense="min")
        assert res.value == -2.0

    def test_exhaustive_count(self):
        res = enumerate_boolean((np.zeros((3, 3)), np.zeros(3), 0.0), 3)
        assert res.evaluations == 8
        assert res.method == "Enumeration"

    def test_zero_vars(self):
        assert enumerate_boolean((np.zeros((0, 0)), np.zeros(0), 4.5),
                                 0).value == 4.5

    def test_limit_enforced(self):
        with pytest.raises(ValueError):
            enumerate_boolean(lambda x: 0.0, ENUM_LIMIT + 1)

    @given(st.integers(1, 7), st.integers(0, 200))
    @settings(max_examples=30, deadline=None)
    def test_optimum_dominates_random_points(self, n, seed):
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((n, n))
        q = (q + q.T) / 2
        c = rng.standard_normal(n)
        res = enumerate_boolean((q, c, 0.0), n)
        for _ in range(10):
            x = rng.choice([-1.0, 1.0], size=n)
            assert x @ q @ x + c @ x <= res.value + 1e-10


class TestSamplePureStates:
    def test_unconstrained_top_eigenvalue(self):
        c = np.diag([0.2, 1.7, -0.4])
        p = RankSdp(REAL, 3, fmat(c, field=REAL, symmetry_class="symmetric"))
        res = sample_pure_states(p, n_starts=8, seed=0)
        assert abs(res.value - 1.7) < 1e-8
        assert res.feasible

    def test_complex_hermitian(self):
        c = np.array([[0.0, -1j], [1j, 0.0]])
        p = RankSdp(COMPLEX, 2,
                    fmat(c, field=COMPLEX, symmetry_class="hermitian"))
        res = sample_pure_states(p, n_starts=8, seed=1)
        assert abs(res.value - 1.0) < 1e-8

    def test_constrained_stays_feasible(self):
        # Maximize <x e11 x> subject to <x diag(1,1,0) x> = 0.5: optimum 0.5.
        obj = fmat(np.diag([1.0, 0.0, 0.0]), field=REAL)
        con = LinearFunctional(fmat(np.diag([1.0, 1.0, 0.0]), field=REAL),
                               0.5, EQ)
        p = RankSdp(REAL, 3, obj, constraints=(con,))
        res = sample_pure_states(p, n_starts=16, seed=2)
        assert res.feasible
        assert abs(res.value - 0.5) < 1e-4

    def test_seeded_determinism(self):
        c = np.diag([1.0, 2.0])
        p = RankSdp(REAL, 2, fmat(c, field=REAL))
        r1 = sample_pure_states(p, n_starts=4, seed=3)
        r2 = sample_pure_states(p, n_starts=4, seed=3)
        assert r1.value == r2.value

    def test_min_sense(self):
        c = np.diag([1.0, -3.0])
        p = RankSdp(REAL, 2, fmat(c, field=REAL), sense="min")
        res = sample_pure_states(p, n_starts=8, seed=4)
        assert abs(res.value + 3.0) < 1e-8


class TestSampleMaxEntangled:
    def test_projector_has_unit_overlap(self):
        for n in (2, 3):
            rho = max_entangled_projector(n).data
            res = sample_max_entangled(rho, n, n_starts=4, seed=0)
            assert res.value > 1.0 - 1e-8

    def test_identity_gives_flat_overlap(self):
        n = 2
        rho = np.eye(n * n) / (n * n)
        res = sample_max_entangled(rho, n, n_starts=4, seed=0)
        assert abs(res.value - 1.0 / (n * n)) < 1e-10

    def test_witness_is_max_entangled(self):
        rng = np.random.default_rng(5)
        g = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        res = sample_max_entangled(rho, 3, n_starts=6, seed=1)
        psi = res.witness
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-9
        m1 = np.einsum("ik,jk->ij", psi.reshape(3, 3),
                       psi.conj().reshape(3, 3))
        np.testing.assert_allclose(m1, np.eye(3) / 3, atol=1e-8)
        # Reported value matches the witness overlap.
        assert abs(np.real(psi.conj() @ rho @ psi) - res.value) < 1e-10

    def test_lower_bounds_fidelity_relaxation(self):
        # The ascent value can never exceed a certified relaxation optimum.
        from rankhier.apps import unfaithfulness_check
        from rankhier.hierarchy import LevelSpec
        rng = np.random.default_rng(6)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        res = sample_max_entangled(rho, 2, n_starts=8, seed=2)
        v = unfaithfulness_check(rho, level=LevelSpec("L1"), sample_starts=0)
        assert res.value <= v.xi2t + 1e-7
