import json

import numpy as np
import pytest

from rankhier.conic import PSD, ConicProgram, ProgramBuilder
from rankhier.solver import (ENV_BACKEND, INFEASIBLE, OPTIMAL,
                             CertificationError, SolverConfig,
                             backend_from_env, certify_upper_bound,
                             feasibility_margin, margin_check, solve,
                             solve_and_certify)


def eig_program(c_mat, trace=1.0, sense="max", extra_rows=()):
    """max/min Tr(C rho) s.t. Tr rho = trace, rho psd."""
    d = c_mat.shape[0]
    b = ProgramBuilder(sense)
    h = b.add_block(PSD, d)
    b.add_objective_sym(h, c_mat)
    r = b.new_row(trace)
    b.row_add_sym(r, h, np.eye(d))
    for g, t in extra_rows:
        r = b.new_row(t)
        b.row_add_sym(r, h, g)
    cp = b.build()
    return cp.with_metadata(trace_bounds=[trace])


class TestSolve:
    def test_top_eigenvalue(self):
        cp = eig_program(np.diag([1.0, -1.0]))
        sol = solve(cp)
        assert sol.status == OPTIMAL
        assert abs(sol.primal_value - 1.0) < 1e-7

    def test_min_sense(self):
        cp = eig_program(np.diag([1.0, -1.0]), sense="min")
        sol = solve(cp)
        assert abs(sol.primal_value + 1.0) < 1e-7

    def test_weak_duality(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            c = rng.standard_normal((3, 3))
            cp = eig_program((c + c.T) / 2)
            sol = solve(cp)
            # Iterates are feasible only to feas_tol, so the raw gap can
            # dip slightly negative; the rigorous 1e-9 statement lives on
            # the certified bound (see TestCertify).
            assert sol.dual_value + 1e-6 >= sol.primal_value

    def test_infeasible_duplicate_trace(self):
        g = np.eye(2)
        cp = eig_program(np.diag([1.0, 0.0]), extra_rows=[(g, 2.0)])
        sol = solve(cp)
        assert sol.status == INFEASIBLE

    def test_primal_point_feasible(self):
        c = np.array([[0.0, 1.0], [1.0, 0.0]])
        sol = solve(eig_program(c))
        rho = sol.primal_point[0]
        assert abs(np.trace(rho) - 1.0) < 1e-6
        assert np.linalg.eigvalsh(rho).min() > -1e-7

    def test_deterministic(self):
        cp = eig_program(np.diag([0.3, -0.2, 1.7]) + 0.1)
        s1 = solve(cp)
        s2 = solve(cp)
        assert s1.primal_value == s2.primal_value
        assert s1.iterations == s2.iterations

    def test_json_round_trip_same_solve(self):
        cp = eig_program(np.diag([2.0, 1.0, -1.0]))
        cp2 = ConicProgram.from_json_dict(
            json.loads(json.dumps(cp.to_json_dict())))
        s1, s2 = solve(cp), solve(cp2)
        assert abs(s1.primal_value - s2.primal_value) < 1e-9


class TestCertify:
    def test_certified_at_least_optimum(self):
        cp = eig_program(np.diag([1.0, -1.0]))
        sol = solve_and_certify(cp)
        assert sol.certified_bound is not None
        assert sol.certified_bound >= 1.0 - 1e-9
        assert sol.certified_bound <= 1.0 + 1e-6

    def test_min_sense_lower_bound(self):
        cp = eig_program(np.diag([5.0, 3.0]), sense="min")
        sol = solve_and_certify(cp)
        assert sol.certified_bound is not None
        assert sol.certified_bound <= 3.0 + 1e-9
        assert sol.certified_bound >= 3.0 - 1e-6

    def test_random_dominance(self):
        # Certified bounds must never undercut the exact top eigenvalue.
        rng = np.random.default_rng(7)
        for _ in range(15):
            c = rng.standard_normal((4, 4))
            c = (c + c.T) / 2
            sol = solve_and_certify(eig_program(c))
            exact = np.linalg.eigvalsh(c).max()
            assert sol.certified_bound is not None
            assert sol.certified_bound >= exact - 1e-9

    def test_missing_dual_rejected(self):
        cp = eig_program(np.eye(2))
        sol = solve(cp)
        sol.dual_point = {}
        with pytest.raises(CertificationError):
            certify_upper_bound(cp, sol)

    def test_loosened_run_still_sound(self):
        rng = np.random.default_rng(3)
        c = rng.standard_normal((4, 4))
        c = (c + c.T) / 2
        cfg = SolverConfig(max_iters=60, check_interval=10)
        sol = solve_and_certify(eig_program(c), cfg)
        if sol.certified_bound is not None:
            assert sol.certified_bound >= np.linalg.eigvalsh(c).max() - 1e-9


class TestMargin:
    def test_feasible_margin_nonnegative(self):
        cp = eig_program(np.zeros((2, 2)))
        assert feasibility_margin(cp) >= -1e-8

    def test_unconstrained_is_wide_open(self):
        b = ProgramBuilder("max")
        b.add_block(PSD, 2)
        cp = b.build().with_metadata(trace_bounds=[1.0])
        rep = margin_check(cp)
        assert rep.margin > 1.0 or rep.margin == float("inf")

    def test_certified_infeasible(self):
        g = np.eye(2)
        cp = eig_program(np.zeros((2, 2)), extra_rows=[(g, 2.0)])
        rep = margin_check(cp)
        assert rep.margin < -1e-6 or rep.margin == float("-inf")
        assert rep.infeasibility_certified

    def test_tight_but_feasible(self):
        # rho = e11 is the only feasible point; margin ~ 0, not certified.
        g = np.diag([1.0, 0.0])
        cp = eig_program(np.zeros((2, 2)), extra_rows=[(g, 1.0)])
        rep = margin_check(cp)
        assert rep.margin > -1e-6
        assert not rep.infeasibility_certified


class TestBackend:
    def test_env_sets_backend(self, monkeypatch):
        monkeypatch.setenv(ENV_BACKEND, "/usr/bin/true")
        cfg = backend_from_env(SolverConfig())
        assert cfg.backend == "/usr/bin/true"

    def test_env_absent_keeps_none(self, monkeypatch):
        monkeypatch.delenv(ENV_BACKEND, raising=False)
        cfg = backend_from_env(SolverConfig())
        assert not cfg.backend
