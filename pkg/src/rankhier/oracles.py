"""Independent brute-force and sampling baselines.

These never feed the certified bounds; they exist to sanity-check the
relaxations from below (maximization) or above (minimization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import COMPLEX
from .problem import EQ, RankSdp

ENUM_LIMIT = 24


@dataclass(frozen=True)
class OracleResult:
    value: float
    witness: np.ndarray
    method: str  # "Enumeration" | "GridSearch" | "MultiStartAscent"
    evaluations: int
    feasible: bool = True


def _sign_vectors(n_vars: int, chunk: int = 4096):
    """Yield +-1 assignment blocks of shape (m, n_vars)."""
    total = 1 << n_vars
    cols = np.arange(n_vars)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))[:, None]
        bits = (idx >> cols) & 1
        yield 1.0 - 2.0 * bits


def enumerate_boolean(objective, n_vars: int,
                      sense: str = "max") -> OracleResult:
    """Exact optimum of a function of +-1 vectors by full enumeration.

    ``objective`` is either a callable on a +-1 vector or a tuple
    (Q, c, const) meaning x^T Q x + c^T x + const, which enables the
    vectorized path.
    """
    if n_vars > ENUM_LIMIT:
        raise ValueError(f"enumeration limited to {ENUM_LIMIT} variables")
    if n_vars == 0:
        v = float(objective(np.zeros(0))) if callable(objective) \
            else float(objective[2])
        return OracleResult(v, np.zeros(0), "Enumeration", 1)
    sgn = 1.0 if sense == "max" else -1.0
    best = -np.inf
    best_x = None
    evals = 0
    if callable(objective):
        for block in _sign_vectors(n_vars):
            for x in block:
                v = sgn * float(objective(x))
                evals += 1
                if v > best + 1e-15 or (
                        abs(v - best) <= 1e-15 and best_x is not None
                        and tuple(x) < tuple(best_x)):
                    best, best_x = v, x.copy()
    else:
        q, c, const = objective
        q = np.asarray(q, dtype=float)
        c = np.asarray(c, dtype=float)
        for block in _sign_vectors(n_vars):
            vals = sgn * (np.einsum("bi,ij,bj->b", block, q, block)
                          + block @ c + float(const))
            evals += block.shape[0]
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, best_x = float(vals[i]), block[i].copy()
    return OracleResult(sgn * best, best_x, "Enumeration", evals)


def _penalized_ascent(x_op, cons, phi0, weights, iters, sgn):
    """Projected-gradient ascent on the unit sphere with penalty schedule."""
    phi = phi0 / np.linalg.norm(phi0)
    evals = 0
    for w in weights:
        step = 0.1
        val = None
        for _ in range(iters):
            grads = sgn * (x_op @ phi)
            f = sgn * float(np.real(np.conj(phi) @ (x_op @ phi)))
            for m, t in cons:
                dev = float(np.real(np.conj(phi) @ (m @ phi))) - t
                f -= w * dev * dev
                grads = grads - (2.0 * w * dev) * (m @ phi)
            evals += 1
            if val is not None and f < val - 1e-14:
                step *= 0.5
                if step < 1e-12:
                    break
            val = f
            cand = phi + step * grads
            phi = cand / np.linalg.norm(cand)
    return phi, evals


def sample_pure_states(problem: RankSdp, n_starts: int = 64,
                       seed: int = 0) -> OracleResult:
    """Heuristic lower bound for rank-1 problems via penalty ascent.

    Equality constraints enter through a quadratic-penalty schedule; the
    result reports the best objective among samples whose constraint
    violation ends below 1e-6, falling back (flagged) to the best overall.
    """
    rng = np.random.default_rng(seed)
    n = problem.dim_n
    cplx = problem.field == COMPLEX
    x_op = np.asarray(problem.objective.data)
    cons = [(np.asarray(lf.coeff.data), float(lf.target))
            for lf in problem.constraints if lf.relation == EQ]
    sgn = 1.0 if problem.sense == "max" else -1.0
    weights = (1e2, 1e4, 1e6) if cons else (0.0,)
    best_feas = None
    best_any = None
    evals = 0
    for _ in range(n_starts):
        phi0 = rng.standard_normal(n)
        if cplx:
            phi0 = phi0 + 1j * rng.standard_normal(n)
        phi, ev = _penalized_ascent(x_op, cons, phi0, weights, 300, sgn)
        evals += ev
        obj = float(np.real(np.conj(phi) @ (x_op @ phi)))
        viol = max((abs(float(np.real(np.conj(phi) @ (m @ phi))) - t)
                    for m, t in cons), default=0.0)
        key = sgn * obj
        if best_any is None or key > best_any[0]:
            best_any = (key, obj, phi)
        if viol <= 1e-6 and (best_feas is None or key > best_feas[0]):
            best_feas = (key, obj, phi)
    if best_feas is not None:
        _, obj, phi = best_feas
        return OracleResult(obj, phi, "MultiStartAscent", evals)
    _, obj, phi = best_any
    return OracleResult(obj, phi, "MultiStartAscent", evals, feasible=False)


def sample_max_entangled(rho, n: int, n_starts: int = 64,
                         seed: int = 0) -> OracleResult:
    """Best overlap of ``rho`` with a maximally entangled pure state.

    Ascends over unitaries U -> |(1 x U) phi+>, retracting each step to
    the unitary group through the polar decomposition.
    """
    rho = np.asarray(rho)
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(n)

    def psi_of(u):
        # amplitude at index a*n + b is U[b, a] / sqrt(n)
        return (u.T.reshape(-1) * s).astype(complex)

    best = (-np.inf, None)
    evals = 0
    for _ in range(n_starts):
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        u, _r = np.linalg.qr(g)
        step = 0.5
        val = None
        for _ in range(400):
            psi = psi_of(u)
            f = float(np.real(np.conj(psi) @ (rho @ psi)))
            evals += 1
            if val is not None and f < val - 1e-14:
                step *= 0.5
                if step < 1e-12:
                    break
            val = f
            grad = (rho @ psi).reshape(n, n).T * s  # d f / d conj(U)
            cand = u + step * grad
            uu, _ss, vv = np.linalg.svd(cand)
            u = uu @ vv
        psi = psi_of(u)
        f = float(np.real(np.conj(psi) @ (rho @ psi)))
        if f > best[0]:
            best = (f, psi)
    return OracleResult(best[0], best[1], "MultiStartAscent", evals)
