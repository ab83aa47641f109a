"""Bundled conic solver.

Solves :class:`~rankhier.conic.ConicProgram` instances with a first-order
operator-splitting method on the homogeneous self-dual embedding (HSDE):
Douglas-Rachford iterations alternating a cached linear-system solve with
projections onto the cone product, after Ruiz equilibration of the data.
The HSDE yields infeasibility/unboundedness certificates, which is what the
feasibility-style programs here need.

Rigorous bounds never come from the raw iterates: :func:`certify_upper_bound`
repairs a dual point to exact feasibility (least-squares repair of free
columns, identity shifts paid for through per-block trace bounds) and
re-checks it independently.

Everything is deterministic: identical inputs and config reproduce results
bit for bit.
"""

from __future__ import annotations

import json
import os
import subprocess
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conic import (FREE, NONNEG, PSD, Block, ConicProgram, PresolveInfeasible,
                    presolve as presolve_program, smat, svec)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
MAXITER = "MaxIter"
NUMERICAL = "NumericalTrouble"
INTERRUPTED = "Interrupted"


class CertificationError(RuntimeError):
    """The dual point is too infeasible to repair into a rigorous bound."""


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iters: int = 100_000
    #: over-relaxation factor of the splitting iteration
    step_damping: float = 1.5
    presolve: bool = True
    #: "auto" | "direct" | "cg"
    linsys: str = "auto"
    check_interval: int = 25
    time_limit: float | None = None
    #: path of an external backend executable; None = bundled engine
    backend: str | None = None
    verbose: bool = False

    def __post_init__(self):
        if min(self.feas_tol, self.gap_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.step_damping < 2.0):
            raise ValueError("step_damping must lie in (0, 2)")


@dataclass
class Solution:
    status: str
    primal_value: float
    dual_value: float
    primal_point: list
    dual_point: dict
    gap: float
    iterations: int
    certified_bound: float | None = None
    residuals: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "primal_value": _jf(self.primal_value),
            "dual_value": _jf(self.dual_value),
            "primal_point": [np.asarray(p).tolist() for p in self.primal_point],
            "dual_point": {k: np.asarray(v).tolist()
                           for k, v in self.dual_point.items()},
            "gap": _jf(self.gap),
            "iterations": self.iterations,
            "certified_bound": _jf(self.certified_bound)
            if self.certified_bound is not None else None,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Solution":
        return Solution(
            status=d["status"],
            primal_value=_uf(d.get("primal_value")),
            dual_value=_uf(d.get("dual_value")),
            primal_point=[np.asarray(p, dtype=np.float64)
                          for p in d.get("primal_point", [])],
            dual_point={k: np.asarray(v, dtype=np.float64)
                        for k, v in d.get("dual_point", {}).items()},
            gap=_uf(d.get("gap")),
            iterations=int(d.get("iterations", 0)),
            certified_bound=(None if d.get("certified_bound") is None
                             else float(d["certified_bound"])),
        )


def _jf(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _uf(x):
    if x is None:
        return float("nan")
    if isinstance(x, str):
        return float(x)
    return float(x)


# -- lowering to the splitting form --------------------------------------------

class _Lowered:
    """min c.x  s.t.  A x + s = b,  s in {0}^meq x (cone rows)."""

    def __init__(self, cp: ConicProgram):
        self.cp = cp
        self.sign = -1.0 if cp.sense == "max" else 1.0
        m_eq, n = cp.n_rows, cp.n_vars
        cone_rows = []
        segs = []  # (cone, dim, length) in row order after the zero segment
        off = 0
        for bl in cp.blocks:
            if bl.cone != FREE:
                eye = sp.identity(bl.vec_len, format="coo")
                part = sp.coo_matrix(
                    (-eye.data, (eye.row, eye.col + off)),
                    shape=(bl.vec_len, n))
                cone_rows.append(part)
                segs.append((bl.cone, bl.dim, bl.vec_len))
            off += bl.vec_len
        if cone_rows:
            self.A = sp.vstack([cp.A] + cone_rows).tocsr()
        else:
            self.A = cp.A.tocsr()
        self.b = np.concatenate([cp.b, np.zeros(self.A.shape[0] - m_eq)])
        self.c = self.sign * cp.c
        self.m_eq = m_eq
        self.n = n
        self.segs = segs

    def project_dual_cone(self, y: np.ndarray) -> np.ndarray:
        """Project the y-slot onto K* (equality rows free, cones self-dual)."""
        out = y.copy()
        off = self.m_eq
        for cone, dim, ln in self.segs:
            seg = out[off:off + ln]
            if cone == NONNEG:
                np.maximum(seg, 0.0, out=seg)
            else:
                m = smat(seg, dim)
                w, q = np.linalg.eigh(m)
                w = np.maximum(w, 0.0)
                out[off:off + ln] = svec((q * w) @ q.T)
            off += ln
        return out


def _ruiz_equilibrate(low: _Lowered, iters: int = 12):
    """Cone-grouped Ruiz scaling; returns (d_row, e_col, beta, gamma, As)."""
    A = low.A.tocsr().copy()
    m, n = A.shape
    d = np.ones(m)
    e = np.ones(n)
    group = []  # slices of rows that must share a scale (PSD blocks)
    off = low.m_eq
    for cone, _dim, ln in low.segs:
        if cone == PSD:
            group.append(slice(off, off + ln))
        off += ln
    for _ in range(iters):
        Aa = sp.csr_matrix((np.abs(A.data), A.indices, A.indptr), shape=A.shape)
        rmax = np.asarray(Aa.max(axis=1).todense()).ravel()
        cmax = np.asarray(Aa.max(axis=0).todense()).ravel()
        rmax[rmax == 0] = 1.0
        cmax[cmax == 0] = 1.0
        for g in group:
            rmax[g] = rmax[g].max()
        dr = 1.0 / np.sqrt(rmax)
        dc = 1.0 / np.sqrt(cmax)
        A = sp.diags(dr) @ A @ sp.diags(dc)
        d *= dr
        e *= dc
    bs = d * low.b
    cs = e * low.c
    beta = 1.0 / max(np.linalg.norm(bs), 1e-9)
    gamma = 1.0 / max(np.linalg.norm(cs), 1e-9)
    return d, e, beta * bs, gamma * cs, beta, gamma, A.tocsr()


class _LinSolver:
    """Solves M (zx, zy) = (wx, wy) with M = [[I, A^T], [-A, I]].

    Reduces to (I + A^T A) zx = wx - A^T wy; direct sparse LU or conjugate
    gradients with Jacobi preconditioning and warm starts.
    """

    def __init__(self, A: sp.csr_matrix, mode: str):
        self.A = A
        self.At = A.T.tocsr()
        m, n = A.shape
        self.n = n
        if mode == "auto":
            mode = "direct" if n <= 12_000 else "cg"
        self.mode = mode
        if mode == "direct":
            P = (self.At @ A).tocsc() + sp.identity(n, format="csc")
            self.lu = spla.splu(P.tocsc())
        else:
            col_sq = np.asarray(A.multiply(A).sum(axis=0)).ravel()
            self.jacobi = 1.0 / (1.0 + col_sq)
            self.warm = np.zeros(n)

    def _apply_P(self, v: np.ndarray) -> np.ndarray:
        return v + self.At @ (self.A @ v)

    def solve(self, wx: np.ndarray, wy: np.ndarray, rel_tol: float = 1e-12):
        rhs = wx - self.At @ wy
        if self.mode == "direct":
            zx = self.lu.solve(rhs)
        else:
            zx = self._cg(rhs, rel_tol)
        zy = wy + self.A @ zx
        return zx, zy

    def _cg(self, rhs: np.ndarray, rel_tol: float) -> np.ndarray:
        x = self.warm
        r = rhs - self._apply_P(x)
        z = self.jacobi * r
        p = z.copy()
        rz = r @ z
        target = max(rel_tol, 1e-13) * max(np.linalg.norm(rhs), 1e-300)
        for _ in range(400):
            if np.linalg.norm(r) <= target:
                break
            Ap = self._apply_P(p)
            pap = p @ Ap
            if not np.isfinite(pap) or pap <= 0.0 or abs(rz) == 0.0:
                break  # breakdown; P is spd so this only happens at roundoff
            alpha = rz / pap
            x = x + alpha * p
            r = r - alpha * Ap
            z = self.jacobi * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        self.warm = x.copy()
        return x


def solve(cp: ConicProgram, cfg: SolverConfig | None = None,
          probe=None) -> Solution:
    """Solve a conic program; see the module docstring for the algorithm.

    ``probe``, if given, is called periodically with the current dual
    estimate over the original rows; returning True stops the iteration
    early with status ``Interrupted``.  Callers use this to bail out as
    soon as a rigorous certificate is in hand instead of polishing the
    iterates to full tolerance.
    """
    cfg = cfg or SolverConfig()
    if cfg.backend:
        return _solve_external(cp, cfg)
    if cfg.presolve:
        try:
            cp_solved = presolve_program(cp)
        except PresolveInfeasible as exc:
            y = exc.farkas_y if exc.farkas_y is not None \
                else np.zeros(cp.n_rows)
            return Solution(INFEASIBLE, float("nan"), float("nan"), [],
                            {"y": y}, float("nan"), 0)
    else:
        cp_solved = cp
    if probe is not None and cp_solved.n_rows != cp.n_rows:
        kept = _kept_rows(cp, cp_solved)
        inner_probe = probe

        def probe(y):  # scatter presolved-row duals back to original rows
            y_full = np.zeros(cp.n_rows)
            y_full[kept] = y
            return inner_probe(y_full)
    sol = _solve_bundled(cp_solved, cfg, probe=probe)
    if cp_solved.n_rows != cp.n_rows and "y" in sol.dual_point:
        # Presolve dropped dependent rows; rebuild a dual over original rows.
        y_full = np.zeros(cp.n_rows)
        kept = _kept_rows(cp, cp_solved)
        y_full[kept] = sol.dual_point["y"]
        sol.dual_point["y"] = y_full
    return sol


def _kept_rows(cp: ConicProgram, cp_presolved: ConicProgram) -> np.ndarray:
    # Recover which original rows survived by matching presolve bookkeeping.
    info = cp_presolved.metadata.get("presolve", {})
    if "row_index" in info:
        return np.asarray(info["row_index"], dtype=np.int64)
    # Fallback: re-run the same deterministic presolve to get indices.
    from .conic import PRESOLVE_ROW_LIMIT
    m = cp.n_rows
    if m > PRESOLVE_ROW_LIMIT or m == 0:
        return np.arange(m)
    row_norms = np.sqrt(np.asarray(cp.A.multiply(cp.A).sum(axis=1)).ravel())
    scale = np.where(row_norms > 0, row_norms, 1.0)
    An = sp.diags(1.0 / scale) @ cp.A
    G = (An @ An.T).toarray()
    G = (G + G.T) / 2.0
    from scipy.linalg.lapack import dpstrf
    _c, piv, rank, _i = dpstrf(G, lower=1, tol=1e-20)
    return np.sort(piv[:rank] - 1)


def _solve_bundled(cp: ConicProgram, cfg: SolverConfig,
                   probe=None) -> Solution:
    import time
    t0 = time.monotonic()
    low = _Lowered(cp)
    m, n = low.A.shape
    if m == 0:
        return _no_rows_solution(cp, low)
    d, e, bs, cs, beta, gamma, As = _ruiz_equilibrate(low)
    lin = _LinSolver(As, cfg.linsys)
    # Precompute M^{-1} (c, b) for the rank-one correction of (I + Q)^{-1}.
    qx, qy = lin.solve(cs, bs, rel_tol=1e-13)
    denom = 1.0 + cs @ qx + bs @ qy

    u = np.zeros(n + m + 1)
    v = np.zeros(n + m + 1)
    u[-1] = 1.0
    v[-1] = 1.0
    alpha = cfg.step_damping
    sl_x, sl_y = slice(0, n), slice(n, n + m)

    status = MAXITER
    it = 0
    n_checks = 0
    best = None
    infeas_tol = max(cfg.feas_tol, 1e-10)
    while it < cfg.max_iters:
        it += 1
        w = u + v
        rel = min(1e-5, 1.0 / (it * it))
        px, py = lin.solve(w[sl_x], w[sl_y], rel_tol=rel)
        ztau = (w[-1] + cs @ px + bs @ py) / denom
        ut = np.empty_like(u)
        ut[sl_x] = px - ztau * qx
        ut[sl_y] = py - ztau * qy
        ut[-1] = ztau
        ut = alpha * ut + (1.0 - alpha) * u
        wproj = ut - v
        un = np.empty_like(u)
        un[sl_x] = wproj[sl_x]
        un[sl_y] = low.project_dual_cone(wproj[sl_y])
        un[-1] = max(wproj[-1], 0.0)
        v = v - ut + un
        u = un
        if not np.all(np.isfinite(u)):
            status = NUMERICAL
            break
        if it % cfg.check_interval == 0 or it == cfg.max_iters:
            n_checks += 1
            res = _residuals(cp, low, u, v, d, e, beta, gamma)
            if res is not None:
                best = res
                if (res["pres"] <= cfg.feas_tol
                        and res["dres"] <= cfg.feas_tol
                        and res["gap_rel"] <= cfg.gap_tol):
                    status = OPTIMAL
                    break
                if probe is not None and n_checks % 8 == 0:
                    if probe(res["y_orig"]):
                        status = INTERRUPTED
                        break
            cert = _certificates(low, u, v, d, e, infeas_tol)
            if cert is not None:
                status = cert
                break
            if cfg.time_limit and time.monotonic() - t0 > cfg.time_limit:
                break

    if status in (INFEASIBLE, UNBOUNDED):
        y_unscaled = _unscale_ray_y(low, u, d, gamma)
        pv = float("nan")
        return Solution(status, pv, pv, [],
                        {"y": _to_orig_dual(cp, low, y_unscaled)},
                        float("nan"), it)
    if best is None:
        best = _residuals(cp, low, u, v, d, e, beta, gamma)
    if best is None:
        return Solution(NUMERICAL, float("nan"), float("nan"), [],
                        {"y": np.zeros(cp.n_rows)}, float("nan"), it)
    sol = Solution(
        status=status,
        primal_value=best["pval"],
        dual_value=best["dval"],
        primal_point=cp.split(best["x"]),
        dual_point={"y": best["y_orig"], "z": best["z"]},
        gap=abs(best["pval"] - best["dval"]),
        iterations=it,
        residuals={"primal": best["pres"], "dual": best["dres"],
                   "gap_rel": best["gap_rel"]},
    )
    return sol


def _no_rows_solution(cp: ConicProgram, low: _Lowered) -> Solution:
    # No equality rows and no cone rows means every block is free.
    if np.any(low.c != 0.0):
        return Solution(UNBOUNDED, float("nan"), float("nan"), [],
                        {"y": np.zeros(0)}, float("nan"), 0)
    x = np.zeros(low.n)
    return Solution(OPTIMAL, 0.0, 0.0, cp.split(x),
                    {"y": np.zeros(0), "z": np.zeros(low.n)}, 0.0, 0)


def _residuals(cp, low, u, v, d, e, beta, gamma):
    tau = u[-1]
    if tau <= 1e-12:
        return None
    n, m = low.n, low.A.shape[0]
    xs = u[:n] / tau
    ys = u[n:n + m] / tau
    ss = v[n:n + m] / tau
    # Unscale: x = E xs / beta, y = D ys / gamma, s = D^{-1} ss / beta.
    x = e * xs / beta
    y = d * ys / gamma
    s = ss / d / beta
    pres_v = low.A @ x + s - low.b
    dres_v = low.A.T @ y + low.c
    pval_int = low.c @ x
    dval_int = -low.b @ y
    pres = np.linalg.norm(pres_v) / (1.0 + np.linalg.norm(low.b))
    dres = np.linalg.norm(dres_v) / (1.0 + np.linalg.norm(low.c))
    gap_rel = abs(pval_int - dval_int) / (
        1.0 + abs(pval_int) + abs(dval_int))
    sign = low.sign
    pval = sign * pval_int
    # Internal dual (min convention): nu = -y_eq; reported in cp's sense.
    nu_int = -y[:low.m_eq]
    nu = sign * nu_int
    A_eq_t_nu = low.A[:low.m_eq].T @ nu
    z = A_eq_t_nu - low.cp.c if low.cp.sense == "max" else low.cp.c - A_eq_t_nu
    return {
        "x": x, "y_orig": nu, "z": z, "pval": pval,
        "dval": sign * dval_int,
        "pres": pres, "dres": dres, "gap_rel": gap_rel,
    }


def _certificates(low, u, v, d, e, tol):
    n, m = low.n, low.A.shape[0]
    tau, kappa = u[-1], v[-1]
    if tau > 1e-9 * max(kappa, 1.0) and kappa <= 1e-9:
        return None
    ys = u[n:n + m]
    y = d * ys
    bty = low.b @ y
    if bty < -1e-12:
        yc = y / (-bty)
        if np.linalg.norm(low.A.T @ yc) <= tol:
            return INFEASIBLE
    xs = u[:n]
    x = e * xs
    ctx = low.c @ x
    if ctx < -1e-12:
        xc = x / (-ctx)
        sc = (v[n:n + m] / d) / (-ctx)
        if np.linalg.norm(low.A @ xc + sc) <= tol:
            return UNBOUNDED
    return None


def _unscale_ray_y(low, u, d, gamma):
    n, m = low.n, low.A.shape[0]
    return d * u[n:n + m]


def _to_orig_dual(cp, low, y):
    return -low.sign * y[:low.m_eq] if y.shape[0] >= low.m_eq else y


# -- certification -------------------------------------------------------------

def dual_slack(cp: ConicProgram, nu: np.ndarray) -> np.ndarray:
    """Slack vector of a dual point in the program's own sense convention.

    For Max: Z = A^T nu - c; for Min: Z = c - A^T nu.  Dual feasibility is
    Z = 0 on free coordinates and Z in the (self-dual) cone elsewhere.
    """
    at_nu = cp.A.T @ np.asarray(nu, dtype=np.float64)
    return at_nu - cp.c if cp.sense == "max" else cp.c - at_nu


def _repair_free(cp: ConicProgram, nu: np.ndarray):
    """Least-norm correction of nu so free-coordinate slacks vanish exactly."""
    free_cols = []
    for bl, sl in zip(cp.blocks, cp.block_slices()):
        if bl.cone == FREE:
            free_cols.extend(range(sl.start, sl.stop))
    if not free_cols:
        return nu, 0.0
    Af = cp.A[:, free_cols].toarray()
    z = dual_slack(cp, nu)
    r = z[free_cols]
    # Want (A^T delta)[free] = +r for max sense, -r for min.
    sgn = 1.0 if cp.sense == "max" else -1.0
    delta, *_ = np.linalg.lstsq(Af.T, sgn * r, rcond=None)
    nu2 = nu + delta
    resid = np.max(np.abs(dual_slack(cp, nu2)[free_cols]), initial=0.0)
    return nu2, resid


def certify_upper_bound(cp: ConicProgram, sol: Solution,
                        residual_limit: float = 1e-4) -> float:
    """Rigorous bound from a repaired dual point.

    Returns an upper bound on the optimum for Max programs and a lower bound
    for Min programs.  PSD/nonneg slack violations are shifted out by adding
    multiples of the identity, paid for with the per-block trace bounds the
    builders record in ``metadata["trace_bounds"]``.  The repaired point is
    re-checked at 10x tighter tolerance before the bound is returned.
    """
    if "y" not in sol.dual_point or len(sol.dual_point["y"]) != cp.n_rows:
        raise CertificationError("solution carries no usable dual point")
    nu = np.asarray(sol.dual_point["y"], dtype=np.float64)
    nu, free_resid = _repair_free(cp, nu)
    scale = 1.0 + float(np.max(np.abs(cp.c), initial=0.0)) + float(
        np.max(np.abs(nu), initial=0.0))
    if free_resid > 1e-9 * scale:
        raise CertificationError(
            f"free-coordinate stationarity not repairable ({free_resid:.2e})")
    z = dual_slack(cp, nu)
    bounds = cp.metadata.get("trace_bounds")
    total_shift = 0.0
    shifts = []
    for i, (bl, sl) in enumerate(zip(cp.blocks, cp.block_slices())):
        if bl.cone == FREE:
            shifts.append(0.0)
            continue
        seg = z[sl.start:sl.stop]
        if bl.cone == NONNEG:
            lam = float(np.min(seg, initial=0.0))
        else:
            lam = float(np.linalg.eigvalsh(smat(seg, bl.dim)).min())
        if lam >= 0.0:
            shifts.append(0.0)
            continue
        if -lam > residual_limit * scale:
            raise CertificationError(
                f"dual point too infeasible on block {i} (violation {-lam:.2e})")
        ub = bounds[i] if bounds is not None and i < len(bounds) else None
        if ub is None:
            raise CertificationError(
                f"block {i} has a dual violation but no trace bound")
        shifts.append(-lam)
        total_shift += (-lam) * float(ub)
    # Independent re-check of the shifted point at 10x tighter tolerance.
    recheck_tol = 1e-9 * scale
    for bl, sl, sh in zip(cp.blocks, cp.block_slices(), shifts):
        if bl.cone == FREE or sh == 0.0:
            continue
        seg = z[sl.start:sl.stop]
        if bl.cone == NONNEG:
            ok = np.min(seg + sh, initial=0.0) >= -recheck_tol
        else:
            m = smat(seg, bl.dim) + sh * np.eye(bl.dim)
            ok = np.linalg.eigvalsh(m).min() >= -recheck_tol
        if not ok:
            raise CertificationError("shifted dual point failed the re-check")
    bnu = float(cp.b @ nu)
    if cp.sense == "max":
        return bnu + total_shift
    return bnu - total_shift


def solve_and_certify(cp: ConicProgram, cfg: SolverConfig | None = None,
                      early_stop_tol: float | None = None) -> Solution:
    """Solve and attach a rigorous objective bound.

    With ``early_stop_tol`` set, a certified bound is computed on the fly
    during the iteration and the solve stops once two consecutive probes
    improve it by less than the tolerance.  Every probed bound is rigorous,
    so stopping early only costs tightness, never soundness.
    """
    probe = None
    tracker = {"best": None, "streak": 0}
    keep = min if cp.sense == "max" else max
    if early_stop_tol is not None:
        def probe(y):
            fake = Solution(OPTIMAL, 0.0, 0.0, [], {"y": y}, 0.0, 0)
            try:
                b = certify_upper_bound(cp, fake)
            except CertificationError:
                return False
            prev = tracker["best"]
            tracker["best"] = b if prev is None else keep(prev, b)
            if prev is None:
                return False
            if abs(prev - tracker["best"]) < early_stop_tol:
                tracker["streak"] += 1
            else:
                tracker["streak"] = 0
            return tracker["streak"] >= 2

    sol = solve(cp, cfg, probe=probe)
    if sol.status in (OPTIMAL, MAXITER, INTERRUPTED):
        try:
            final = certify_upper_bound(cp, sol)
        except CertificationError:
            final = None
        cands = [b for b in (final, tracker["best"]) if b is not None]
        sol.certified_bound = keep(cands) if cands else None
    return sol


# -- feasibility margin --------------------------------------------------------

def margin_program(cp: ConicProgram) -> ConicProgram:
    """max t  s.t.  A(x + t I) = b, x in cones, t free."""
    ivec = cp.identity_vec()
    tcol = sp.csr_matrix(cp.A @ ivec.reshape(-1, 1))
    A = sp.hstack([cp.A, tcol]).tocsr()
    blocks = tuple(cp.blocks) + (Block(FREE, 1),)
    c = np.concatenate([np.zeros(cp.n_vars), [1.0]])
    meta = dict(cp.metadata)
    meta["margin_of"] = cp.metadata.get("level", "feasibility")
    # Trace bounds of the base program do not transfer to the shifted blocks.
    meta.pop("trace_bounds", None)
    return ConicProgram(blocks=blocks, c=c, A=A, b=cp.b, sense="max",
                        metadata=meta)


@dataclass
class MarginReport:
    margin: float
    infeasibility_certified: bool
    farkas_bound: float | None
    solution: Solution | None


def margin_check(cp: ConicProgram, cfg: SolverConfig | None = None,
                 decision_tol: float = 1e-6) -> MarginReport:
    """Quantitative feasibility margin plus a rigorous infeasibility check.

    The margin is the optimum of ``max t : A(x + tI) = b, x in cones``.  A
    certified-negative verdict comes from a Farkas-style bound on the
    original zero-objective program: with Z = A^T nu, any feasible x gives
    b.nu = <Z, x> >= sum_b min(0, lambda_min(Z_b)) * trace_bound_b, so a
    repaired nu violating that inequality proves infeasibility.
    """
    cfg = cfg or SolverConfig()
    mp = margin_program(cp)
    hit = {"fb": None}

    def farkas_probe(y):
        # The margin program shares its rows with cp, so its dual estimate
        # doubles as a Farkas candidate; stop as soon as one certifies.
        fb = _farkas_bound(cp, y)
        if fb is not None and fb < -1e-9:
            hit["fb"] = fb
            return True
        return False

    sol = solve(mp, cfg, probe=farkas_probe)
    if hit["fb"] is not None:
        margin = sol.primal_value if np.isfinite(sol.primal_value) \
            else float("-inf")
        return MarginReport(margin, True, hit["fb"], sol)
    if sol.status == UNBOUNDED:
        return MarginReport(float("inf"), False, None, sol)
    if sol.status == INFEASIBLE:
        # The equality system itself is inconsistent.
        certified = _farkas_certified(cp, sol.dual_point.get("y"))
        return MarginReport(float("-inf"), certified, None, sol)
    margin = sol.primal_value
    certified = False
    fb = None
    if margin < decision_tol and "y" in sol.dual_point:
        fb = _farkas_bound(cp, np.asarray(sol.dual_point["y"]))
        # The Farkas bound is rigorous on its own: any strictly negative
        # value (beyond roundoff) proves infeasibility, no matter how small
        # the margin estimate came out.
        if fb is not None and fb < -1e-9:
            certified = True
    return MarginReport(margin, certified, fb, sol)


def _farkas_bound(cp: ConicProgram, nu: np.ndarray) -> float | None:
    """Certified upper bound on max 0 over the feasibility program.

    Negative return value proves the program infeasible.
    """
    if nu is None or nu.shape[0] != cp.n_rows:
        return None
    zero = ConicProgram(blocks=cp.blocks, c=np.zeros(cp.n_vars), A=cp.A,
                        b=cp.b, sense="max", metadata=dict(cp.metadata))
    fake = Solution(OPTIMAL, 0.0, 0.0, [], {"y": nu}, 0.0, 0)
    try:
        return certify_upper_bound(zero, fake)
    except CertificationError:
        return None


def _farkas_certified(cp: ConicProgram, y) -> bool:
    if y is None:
        return False
    fb = _farkas_bound(cp, np.asarray(y, dtype=np.float64))
    return fb is not None and fb < -1e-12


def feasibility_margin(cp: ConicProgram, cfg: SolverConfig | None = None
                       ) -> float:
    """Max uniform PSD slack t; t < -1e-6 certifies relaxation infeasibility."""
    return margin_check(cp, cfg).margin


# -- external backend ----------------------------------------------------------

ENV_BACKEND = "RANKHIER_SOLVER"


def _solve_external(cp: ConicProgram, cfg: SolverConfig) -> Solution:
    """Run an external solver: program JSON on stdin, Solution JSON on stdout."""
    payload = json.dumps({
        "program": cp.to_json_dict(),
        "config": {"feas_tol": cfg.feas_tol, "gap_tol": cfg.gap_tol,
                   "max_iters": cfg.max_iters},
    })
    proc = subprocess.run(
        [cfg.backend], input=payload.encode(), stdout=subprocess.PIPE,
        check=True)
    return Solution.from_json_dict(json.loads(proc.stdout.decode()))


def backend_from_env(cfg: SolverConfig) -> SolverConfig:
    path = os.environ.get(ENV_BACKEND)
    if path and not cfg.backend:
        return replace(cfg, backend=path)
    return cfg
