"""Problem front-ends: graph bounds, Boolean optimization, quantum checks.

Each function builds the corresponding rank-bounded problem, runs the
requested relaxation level, and interprets the outcome.  Certified values
come from the dual-repair bound, never from the raw solver objective.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph
from .hierarchy import (LevelSpec, build, build_level1,
                        build_level2_reduced_complex, reduced_point)
from .linalg import COMPLEX, REAL, FieldMatrix, fmat, hermitian_basis_indices, \
    hermitian_basis_matrix, real_from_embed
from .oracles import enumerate_boolean, sample_max_entangled
from .problem import (EQ, LinearFunctional, QuadraticObjective, RankSdp,
                      lift_quadratic)
from .solver import (OPTIMAL, SolverConfig, margin_check, solve,
                     solve_and_certify)

EXCLUDED = "ExcludedAtLevel2"
INCONCLUSIVE = "Inconclusive"
UNFAITHFUL = "Unfaithful"


@dataclass
class Bound:
    value: float
    certified: float | None
    status: str
    sense: str
    level: str
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        det = {}
        for k, v in self.details.items():
            det[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return {"value": self.value, "certified": self.certified,
                "status": self.status, "sense": self.sense,
                "level": self.level, "details": det}


@dataclass
class UnfaithfulnessVerdict:
    xi2t: float
    threshold: float
    verdict: str  # Unfaithful | Inconclusive
    lower_bound: float | None
    level: str
    status: str

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class FeasibilityReport:
    verdict: str  # ExcludedAtLevel2 | Inconclusive
    margin: float
    certified: bool
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"verdict": self.verdict, "margin": self.margin,
                "certified": self.certified, "details": self.details}


def _finish(p: RankSdp, level: LevelSpec, cfg: SolverConfig | None,
            offset: float = 0.0, scale: float = 1.0,
            fixed_state=None,
            early_stop_tol: float | None = None) -> tuple[Bound, object, object]:
    if level.level == "L2Reduced" or fixed_state is not None:
        fld = level.field_override or p.field
        if fld == COMPLEX:
            from .hierarchy import build_level2_reduced_complex as b2
        else:
            from .hierarchy import build_level2_reduced_real as b2
        cp = b2(p, fixed_state=fixed_state)
    else:
        cp = build(p, level)
    sol = solve_and_certify(cp, cfg, early_stop_tol=early_stop_tol)
    val = scale * sol.primal_value + offset
    cert = None
    if sol.certified_bound is not None:
        cert = scale * sol.certified_bound + offset
    bound = Bound(val, cert, sol.status, p.sense, level.level)
    return bound, cp, sol


def _marginal_state(cp, sol) -> np.ndarray | None:
    """Physical (trace-one) state recovered from a solved relaxation."""
    meta = cp.metadata
    if meta.get("level") == "L1":
        m = sol.primal_point[0]
        return real_from_embed(m) if meta["field"] == COMPLEX else np.asarray(m)
    if meta.get("level") != "L2Reduced":
        return None
    pt = reduced_point(cp, sol)
    k, n = pt.k, pt.n
    comb = k * k * pt.phi_i + k * pt.phi_v
    if pt.phi_t is not None:
        comb = comb + k * pt.phi_t
    return np.einsum("ijkj->ik", comb.reshape(n, n, n, n))


# -- Max-Cut and Boolean problems ----------------------------------------------

def _diag_constraints(n: int) -> tuple:
    eye = np.eye(n)
    return tuple(
        LinearFunctional(fmat(np.diag(eye[i]), field=REAL), 1.0 / n, EQ)
        for i in range(n))


def maxcut_bound(g: Graph, level: LevelSpec | None = None,
                 cfg: SolverConfig | None = None) -> Bound:
    """Upper bound on Max-Cut from the rank-1 quadratic relaxation."""
    if g.n_vertices == 0:
        raise ValueError("empty graph")
    level = level or LevelSpec("L2Reduced")
    n = g.n_vertices
    w = g.adjacency().data
    offset = g.n_edges / 2.0
    p = RankSdp(REAL, n, fmat(-n * w / 4.0, field=REAL),
                constraints=_diag_constraints(n), rank_bound_k=1.0)
    bound, cp, sol = _finish(p, level, cfg, offset=offset)
    rho = _marginal_state(cp, sol)
    if rho is not None:
        x = _round_pm1(rho)
        bound.details["rounded_cut"] = int(round(
            offset - float(x @ w @ x) / 4.0))
        bound.details["rounded_x"] = x
    return bound


def maxcut_bruteforce(g: Graph) -> int:
    w = g.adjacency().data
    res = enumerate_boolean((-w / 4.0, np.zeros(g.n_vertices),
                             g.n_edges / 2.0), g.n_vertices)
    return int(round(res.value))


def _lift_linear(q: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = q.shape[0]
    l_mat = np.zeros((d + 1, d + 1))
    l_mat[:d, :d] = (q + q.T) / 2.0
    l_mat[:d, d] = c / 2.0
    l_mat[d, :d] = c / 2.0
    return l_mat


def _round_pm1(rho: np.ndarray) -> np.ndarray:
    _w, v = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    lead = np.real(v[:, -1])
    x = np.where(lead >= 0.0, 1.0, -1.0)
    return x


def pseudo_boolean_bound(q_mat, c_vec, level: LevelSpec | None = None,
                         sense: str = "max",
                         cfg: SolverConfig | None = None) -> Bound:
    """Bound max (or min) of x^T Q x + c^T x over x in {-1, 1}^d."""
    level = level or LevelSpec("L2Reduced")
    q = np.asarray(q_mat.data if isinstance(q_mat, FieldMatrix) else q_mat,
                   dtype=float)
    c = np.asarray(c_vec, dtype=float).ravel()
    if q.shape[0] != c.size:
        raise ValueError("Q and c dimensions disagree")
    n = q.shape[0] + 1
    l_mat = _lift_linear(q, c)
    p = RankSdp(REAL, n, fmat(n * l_mat, field=REAL),
                constraints=_diag_constraints(n), rank_bound_k=1.0,
                sense=sense)
    bound, _cp, _sol = _finish(p, level, cfg)
    return bound


def boolean_least_squares(a_mat, b_vec, level: LevelSpec | None = None,
                          cfg: SolverConfig | None = None) -> Bound:
    """Certified lower bound plus a rounded feasible point for
    min ||Ax - b||^2 over x in {-1, 1}^d."""
    level = level or LevelSpec("L2Reduced")
    a = np.asarray(a_mat, dtype=float)
    b = np.asarray(b_vec, dtype=float).ravel()
    if a.shape[0] != b.size:
        raise ValueError("A and b dimensions disagree")
    q = a.T @ a
    c = -2.0 * a.T @ b
    const = float(b @ b)
    n = q.shape[0] + 1
    p = RankSdp(REAL, n, fmat(n * _lift_linear(q, c), field=REAL),
                constraints=_diag_constraints(n), rank_bound_k=1.0,
                sense="min")
    bound, cp, sol = _finish(p, level, cfg, offset=const)
    rho = _marginal_state(cp, sol)
    if rho is not None:
        y = _round_pm1(rho)
        if y[-1] < 0:
            y = -y
        x = y[:-1]
        bound.details["rounded_x"] = x
        bound.details["rounded_value"] = float(np.sum((a @ x - b) ** 2))
    return bound


# -- graph representations -----------------------------------------------------

def _offdiag_zero_constraints(pairs, n: int, fld: str) -> list:
    out = []
    s = 1.0 / math.sqrt(2.0)
    for i, j in pairs:
        m = np.zeros((n, n), dtype=complex)
        m[i, j] = m[j, i] = s
        out.append(LinearFunctional(fmat(m if fld == COMPLEX else m.real,
                                         field=fld), 0.0, EQ))
        if fld == COMPLEX:
            ma = np.zeros((n, n), dtype=complex)
            ma[i, j] = 1j * s
            ma[j, i] = -1j * s
            out.append(LinearFunctional(fmat(ma, field=fld), 0.0, EQ))
    return out


def lovasz_theta(g: Graph, cfg: SolverConfig | None = None) -> float:
    """Standard theta SDP: max Tr(JB), Tr B = 1, B psd, B_ij = 0 on edges."""
    n = g.n_vertices
    if n == 0:
        raise ValueError("empty graph")
    p = RankSdp(REAL, n, fmat(np.ones((n, n)), field=REAL),
                constraints=tuple(_offdiag_zero_constraints(
                    sorted(g.edges), n, REAL)),
                rank_bound_k=float(n))
    sol = solve_and_certify(build_level1(p), cfg)
    if sol.certified_bound is not None and sol.status == OPTIMAL:
        # Certified upper bound; at optimality it matches the value.
        return float(sol.certified_bound)
    return float(sol.primal_value)


def orthonormal_rep_check(g: Graph, k: int, fld: str = COMPLEX,
                          cfg: SolverConfig | None = None,
                          contextuality: bool = False) -> FeasibilityReport:
    """Can the graph carry a k-dimensional orthonormal representation?

    Orthogonality on non-edges (graph-theory convention); pass
    ``contextuality=True`` to use the complement instead.  A certified
    negative feasibility margin of the two-copy relaxation of the Gram
    problem excludes representations over the chosen field.
    """
    if contextuality:
        g = g.complement()
    n = g.n_vertices
    if not 1 <= k <= n:
        raise ValueError("k must be between 1 and the vertex count")
    non_edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if (i, j) not in g.edges]
    cons = tuple(_diag_constraints(n)) + tuple(
        _offdiag_zero_constraints(non_edges, n, fld))
    p = RankSdp(fld, n, fmat(np.zeros((n, n)), field=fld),
                constraints=cons, rank_bound_k=float(k))
    if fld == COMPLEX:
        cp = build_level2_reduced_complex(p)
    else:
        from .hierarchy import build_level2_reduced_real
        cp = build_level2_reduced_real(p)
    rep = margin_check(cp, cfg)
    return FeasibilityReport(
        EXCLUDED if rep.infeasibility_certified else INCONCLUSIVE, rep.margin,
        bool(rep.infeasibility_certified),
        {"field": fld, "k": k, "farkas_bound": rep.farkas_bound})


# -- quantum-state applications ------------------------------------------------

def _both_marginal_constraints(n: int) -> tuple:
    """Scalarized form of Tr_1(sigma) = 1/n and Tr_2(sigma) = 1/n."""
    cons = []
    eye = np.eye(n)
    for desc in hermitian_basis_indices(n, COMPLEX):
        f = hermitian_basis_matrix(n, desc)
        t = float(np.real(np.trace(f))) / n
        cons.append(LinearFunctional(
            fmat(np.kron(f, eye), field=COMPLEX), t, EQ))
        cons.append(LinearFunctional(
            fmat(np.kron(eye, f), field=COMPLEX), t, EQ))
    return tuple(cons)


def reference_unfaithful_state(p: float = 23.0 / 40.0) -> FieldMatrix:
    """The canonical 4x4-bipartite regression state.

    A white-noise admixture of two pure states supported on the diagonal
    Schmidt basis, with weights sqrt(alpha)/sqrt(10), sqrt(5-alpha)/sqrt(10)
    and a quarter-turn phase per Schmidt level on the second state.
    """
    n = 4
    beta = 1.0j
    x = np.zeros(n * n, dtype=complex)
    y = np.zeros(n * n, dtype=complex)
    for alpha in range(1, n + 1):
        idx = (alpha - 1) * n + (alpha - 1)
        x[idx] = math.sqrt(alpha) / math.sqrt(10.0)
        y[idx] = beta ** alpha * math.sqrt(5 - alpha) / math.sqrt(10.0)
    rho = (p / 16.0) * np.eye(n * n, dtype=complex)
    rho += (1.0 - p) / 2.0 * np.outer(x, x.conj())
    rho += (1.0 - p) / 2.0 * np.outer(y, y.conj())
    return fmat(rho, field=COMPLEX, symmetry_class="hermitian")


def unfaithfulness_check(rho, level: LevelSpec | None = None,
                         cfg: SolverConfig | None = None,
                         sample_starts: int = 32,
                         seed: int = 7) -> UnfaithfulnessVerdict:
    """Is the state detectable by fidelity witnesses?

    Maximizes the overlap with mixtures of maximally entangled states;
    a certified optimum at or below 1/n proves unfaithfulness.
    """
    level = level or LevelSpec("L2Reduced")
    arr = np.asarray(rho.data if isinstance(rho, FieldMatrix) else rho)
    n2 = arr.shape[0]
    n = math.isqrt(n2)
    if n * n != n2:
        raise ValueError("state must live on C^n x C^n")
    p = RankSdp(COMPLEX, n2, fmat(arr, field=COMPLEX),
                constraints=_both_marginal_constraints(n), rank_bound_k=1.0)
    # The two-copy program is large; stop once the certified bound has
    # stopped moving at a scale far below the reporting precision.
    est = 2e-5 if level.level == "L2Reduced" else None
    bound, _cp, sol = _finish(p, level, cfg, early_stop_tol=est)
    threshold = 1.0 / n
    lower = None
    if sample_starts > 0:
        lower = float(sample_max_entangled(arr, n, n_starts=sample_starts,
                                           seed=seed).value)
    xi = bound.certified if bound.certified is not None else bound.value
    unf = (bound.certified is not None and xi <= threshold
           and (lower is None or lower <= threshold + 1e-6))
    return UnfaithfulnessVerdict(float(xi), threshold,
                                 UNFAITHFUL if unf else INCONCLUSIVE,
                                 lower, level.level, bound.status)


def mixed_unitary_check(choi, cfg: SolverConfig | None = None
                        ) -> FeasibilityReport:
    """Can the channel with this Choi state be a mixture of unitaries?

    Pins the two-copy relaxation of the maximally-entangled-mixture set to
    the given state; a certified negative margin excludes it.
    """
    arr = np.asarray(choi.data if isinstance(choi, FieldMatrix) else choi)
    n2 = arr.shape[0]
    n = math.isqrt(n2)
    if n * n != n2:
        raise ValueError("Choi state must live on C^n x C^n")
    if np.linalg.eigvalsh((arr + arr.conj().T) / 2.0).min() < -1e-8:
        raise ValueError("Choi state must be positive semidefinite")
    if abs(np.trace(arr) - 1.0) > 1e-8:
        raise ValueError("Choi state must have unit trace")
    tr1 = np.einsum("ikjk->ij", arr.reshape(n, n, n, n))
    if np.linalg.norm(tr1 - np.eye(n) / n) > 1e-6:
        warnings.warn("channel is not trace preserving "
                      "(second marginal differs from 1/n); the check "
                      "will typically exclude it for that reason alone")
    p = RankSdp(COMPLEX, n2, fmat(np.zeros((n2, n2)), field=COMPLEX),
                constraints=_both_marginal_constraints(n), rank_bound_k=1.0)
    cp = build_level2_reduced_complex(p, fixed_state=fmat(
        arr, field=COMPLEX, symmetry_class="hermitian"))
    rep = margin_check(cp, cfg)
    return FeasibilityReport(
        EXCLUDED if rep.infeasibility_certified else INCONCLUSIVE, rep.margin,
        bool(rep.infeasibility_certified),
        {"farkas_bound": rep.farkas_bound})


def pure_state_opt(x_obs, measurements, level: LevelSpec | None = None,
                   cfg: SolverConfig | None = None,
                   fld: str = COMPLEX) -> Bound:
    """Upper bound on <phi|X|phi> over pure states matching measurements."""
    level = level or LevelSpec("L2Reduced")
    x = np.asarray(x_obs.data if isinstance(x_obs, FieldMatrix) else x_obs)
    n = x.shape[0]
    cons = []
    for m_i, t_i in measurements:
        m = np.asarray(m_i.data if isinstance(m_i, FieldMatrix) else m_i)
        cons.append(LinearFunctional(fmat(m, field=fld), float(t_i), EQ))
    p = RankSdp(fld, n, fmat(x, field=fld), constraints=tuple(cons),
                rank_bound_k=1.0)
    bound, _cp, _sol = _finish(p, level, cfg)
    return bound


def quadratic_opt(q: QuadraticObjective, base: RankSdp,
                  level: LevelSpec | None = None,
                  cfg: SolverConfig | None = None) -> Bound:
    """Bound a quadratic state functional through the two-copy objective."""
    level = level or LevelSpec("L2Reduced")
    if level.level == "L1":
        raise ValueError("quadratic objectives need the two-copy level")
    g = lift_quadratic(q, base)
    p = dataclasses.replace(base, pair_objective=g)
    bound, _cp, _sol = _finish(p, level, cfg)
    return bound
