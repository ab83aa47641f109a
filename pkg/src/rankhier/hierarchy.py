"""Lowering of rank-bounded problems into solver-ready conic programs.

Levels:

* level 1 drops the rank bound entirely (plain PSD relaxation);
* the reduced level 2 exploits the two-copy symmetry: after eliminating the
  relation between the identity-type and swap-type components, the program
  is parametrized by the symmetric/antisymmetric compressions H+ and H- of
  the identity-type component, linked to partial-transpose blocks by sparse
  equality rows.  The rank bound enters only as a scalar coefficient, so it
  may be any real >= 1;
* the generic level N instantiates an auxiliary k-dimensional factor and a
  PSD variable compressed onto the N-party symmetric subspace, optionally
  with partial-transpose conditions (PSD blocks over party subsets for
  complex problems, transpose-invariance rows for real ones).

Complex Hermitian blocks are lowered through the standard real embedding
[[Re, -Im], [Im, Re]]; coefficients are embedded and halved so inner
products are preserved, and the embedding-structure rows are omitted since
averaging with the complex structure preserves feasibility and value.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import NONNEG, PSD, ConicProgram, ProgramBuilder
from .linalg import (COMPLEX, REAL, FieldMatrix, binom_sym_dim,
                     hermitian_basis_indices, hermitian_basis_matrix,
                     real_from_embed, symmetric_basis, sym_antisym_isometries,
                     swap_operator, SIZE_BUDGET)
from .problem import EQ, LEQ, RankSdp, ProblemFormatError

_SQRT2 = math.sqrt(2.0)


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class LevelSpec:
    level: str  # "L1" | "L2Reduced" | "LN"
    n_parties: int = 2
    ppt: bool = True
    field_override: str | None = None

    def __post_init__(self):
        if self.level not in ("L1", "L2Reduced", "LN"):
            raise BuildError(f"unknown level {self.level!r}")
        if self.level == "LN" and self.n_parties < 2:
            raise BuildError("the generic level needs at least two parties")


def _flat(i: int, j: int, d: int) -> int:
    """svec coordinate of upper-triangle entry (i, j), i <= j."""
    return i * d - i * (i - 1) // 2 + (j - i)


@dataclass
class _Handle:
    idx: int
    dim: int       # logical dimension (pre-embedding)
    cplx: bool
    name: str


class _Low:
    """ProgramBuilder wrapper lowering Hermitian coefficients per block."""

    def __init__(self, sense: str, cplx: bool):
        self.b = ProgramBuilder(sense)
        self.cplx = cplx
        self.handles: list[_Handle] = []
        self.bounds: list = []

    def psd(self, name: str, dim: int, trace_bound=None) -> _Handle:
        real_dim = 2 * dim if self.cplx else dim
        idx = self.b.add_block(PSD, real_dim)
        h = _Handle(idx, dim, self.cplx, name)
        self.handles.append(h)
        if trace_bound is not None and self.cplx:
            trace_bound = 2.0 * trace_bound
        self.bounds.append(trace_bound)
        return h

    def nonneg(self, name: str, dim: int = 1, bound=None) -> _Handle:
        idx = self.b.add_block(NONNEG, dim)
        h = _Handle(idx, dim, False, name)
        self.handles.append(h)
        self.bounds.append(bound)
        return h

    def _lowered(self, h: _Handle, entries):
        """svec (col, val) pairs for the Hermitian dict ``entries``.

        ``entries`` maps (i, j) to complex values over the full matrix; only
        the diagonal and upper triangle are consumed (Hermitian redundancy).
        """
        out = []
        if h.cplx:
            d = h.dim
            dd = 2 * d
            s = 0.5 * _SQRT2
            for (i, j), val in entries.items():
                if i > j:
                    continue
                if i == j:
                    re = val.real * 0.5
                    if re != 0.0:
                        out.append((_flat(i, i, dd), re))
                        out.append((_flat(i + d, i + d, dd), re))
                else:
                    re, im = val.real, val.imag
                    if re != 0.0:
                        out.append((_flat(i, j, dd), s * re))
                        out.append((_flat(i + d, j + d, dd), s * re))
                    if im != 0.0:
                        out.append((_flat(i, j + d, dd), -s * im))
                        out.append((_flat(j, i + d, dd), s * im))
        else:
            d = h.dim
            for (i, j), val in entries.items():
                if i > j:
                    continue
                v = complex(val)
                if abs(v.imag) > 1e-9 * (1.0 + abs(v.real)):
                    raise BuildError("complex coefficient in a real program")
                if v.real == 0.0:
                    continue
                if i == j:
                    out.append((_flat(i, i, d), v.real))
                else:
                    out.append((_flat(i, j, d), _SQRT2 * v.real))
        return out

    def row(self, target: float, herm_terms):
        r = self.b.new_row(target)
        for h, entries in herm_terms:
            for col, val in self._lowered(h, entries):
                self.b.row_add_entry(r, h.idx, col, val)
        return r

    def entry_row(self, target: float, flat_terms):
        """Row from pre-lowered (handle, local svec col, val) triplets."""
        r = self.b.new_row(target)
        for h, col, val in flat_terms:
            self.b.row_add_entry(r, h.idx, col, val)
        return r

    def obj(self, herm_terms, weight: float = 1.0):
        for h, entries in herm_terms:
            for col, val in self._lowered(h, entries):
                self.b.add_objective_entry(h.idx, col, weight * val)

    def scalar_rows(self, entry_terms, target: float = 0.0,
                    with_imag: bool | None = None):
        """Real (and imaginary) rows of sum c * X[x, y] = target.

        ``entry_terms`` is a list of (handle, x, y, complex coeff).  The
        imaginary row defaults to being emitted only for complex programs.
        """
        if with_imag is None:
            with_imag = self.cplx
        re_d: dict = {}
        im_d: dict = {}
        for h, x, y, c in entry_terms:
            c = complex(c)
            g = re_d.setdefault(id(h), [h, {}])[1]
            g[(y, x)] = g.get((y, x), 0.0) + c / 2.0
            g[(x, y)] = g.get((x, y), 0.0) + c.conjugate() / 2.0
            if with_imag:
                gi = im_d.setdefault(id(h), [h, {}])[1]
                gi[(y, x)] = gi.get((y, x), 0.0) - 0.5j * c
                gi[(x, y)] = gi.get((x, y), 0.0) + 0.5j * c.conjugate()
        self.row(target, [v for v in re_d.values()])
        if with_imag:
            nontrivial = any(
                abs(v) > 1e-15 for _h, g in im_d.values() for v in g.values())
            if nontrivial:
                self.row(0.0, [v for v in im_d.values()])

    def build(self, metadata: dict) -> ConicProgram:
        metadata = dict(metadata)
        metadata["blocks_info"] = [
            {"name": h.name, "dim": h.dim, "complex": h.cplx}
            for h in self.handles]
        metadata["trace_bounds"] = list(self.bounds)
        self.b.metadata = metadata
        return self.b.build()


def _pair_maps(n: int):
    """Per-index compression data for the swap-(anti)symmetric isometries.

    For flattened two-copy index a = i*n + j, the symmetric isometry has a
    single nonzero per row at column colp[a] with value valp[a]; likewise
    colm/valm for the antisymmetric one (valm = 0 on diagonal pairs).
    """
    n2 = n * n
    colp = np.zeros(n2, dtype=np.int64)
    valp = np.zeros(n2)
    colm = np.zeros(n2, dtype=np.int64)
    valm = np.zeros(n2)
    s = 1.0 / _SQRT2

    def pidx(i, j):
        return i * (2 * n - i - 1) // 2 + (j - i - 1)

    for i in range(n):
        for j in range(n):
            a = i * n + j
            if i == j:
                colp[a] = i
                valp[a] = 1.0
                colm[a] = -1
                valm[a] = 0.0
            else:
                lo, hi = min(i, j), max(i, j)
                colp[a] = n + pidx(lo, hi)
                valp[a] = s
                colm[a] = pidx(lo, hi)
                valm[a] = s if i < j else -s
    return colp, valp, colm, valm


def _dense_entries(m: np.ndarray, tol: float = 1e-15):
    rows, cols = np.nonzero(np.abs(m) > tol)
    return [(int(i), int(j), m[i, j]) for i, j in zip(rows, cols)]


# -- level 1 -------------------------------------------------------------------

def build_level1(p: RankSdp) -> ConicProgram:
    """Drop the rank bound: one PSD block with the constraints as rows."""
    if not p.normalized:
        raise BuildError("level-1 lowering expects a normalized problem")
    n = p.dim_n
    cplx = p.field == COMPLEX
    low = _Low(p.sense, cplx)
    rho = low.psd("rho", n, trace_bound=1.0)
    eye = {(i, i): 1.0 + 0.0j for i in range(n)}
    low.row(1.0, [(rho, eye)])
    for lf in p.constraints:
        g = {(i, j): lf.coeff.data[i, j]
             for i, j, _v in _dense_entries(lf.coeff.data)}
        if lf.relation == EQ:
            low.row(lf.target, [(rho, g)])
        else:
            lam_min = float(np.linalg.eigvalsh(lf.coeff.data).min())
            slack = low.nonneg(f"slack_{len(low.handles)}", 1,
                               bound=max(0.0, lf.target - lam_min))
            r = low.row(lf.target, [(rho, g)])
            low.b.row_add_entry(r, slack.idx, 0, 1.0)
    for li, lmi in enumerate(p.lmis):
        d = lmi.out_dim
        tr_bound = float(np.real(np.trace(lmi.bound.data)))
        for coeff, unit in lmi.terms:
            ev = np.linalg.eigvalsh(coeff.data)
            tr_bound += abs(np.real(np.trace(unit.data))) * float(
                np.max(np.abs(ev)))
        slack = low.psd(f"lmi_slack_{li}", d, trace_bound=max(0.0, tr_bound))
        for z in range(d):
            for w in range(z, d):
                terms = [(slack, z, w, 1.0)]
                for coeff, unit in lmi.terms:
                    uzw = unit.data[z, w]
                    if uzw == 0:
                        continue
                    for x, y, cv in _dense_entries(coeff.data):
                        terms.append((rho, y, x, uzw * cv))
                low.scalar_rows(terms, float(np.real(lmi.bound.data[z, w])))
    if p.pair_objective is not None:
        raise BuildError("two-copy objectives need a level >= 2 relaxation")
    gobj = {(i, j): p.objective.data[i, j]
            for i, j, _v in _dense_entries(p.objective.data)}
    low.obj([(rho, gobj)])
    return low.build({"level": "L1", "k": p.rank_bound_k, "field": p.field,
                      "ppt": False, "n": n})


# -- reduced level 2 -----------------------------------------------------------

def build_level2_reduced_complex(p: RankSdp, fixed_state=None) -> ConicProgram:
    """Two-copy relaxation over complex variables (any real rank bound)."""
    return _build_level2(p, COMPLEX, fixed_state)


def build_level2_reduced_real(p: RankSdp, fixed_state=None) -> ConicProgram:
    """Two-copy relaxation over real variables (any real rank bound)."""
    if p.field == COMPLEX:
        raise BuildError("the real reduction needs a real-field problem")
    return _build_level2(p, REAL, fixed_state)


def build_level2(p: RankSdp, fixed_state=None) -> ConicProgram:
    if p.field == COMPLEX:
        return build_level2_reduced_complex(p, fixed_state)
    return build_level2_reduced_real(p, fixed_state)


def _build_level2(p: RankSdp, program_field: str, fixed_state) -> ConicProgram:
    if not p.normalized:
        raise BuildError("the reduced level-2 lowering expects a normalized "
                         "problem")
    n = p.dim_n
    n2 = n * n
    k = float(p.rank_bound_k)
    cplx = program_field == COMPLEX
    colp, valp, colm, valm = _pair_maps(n)
    k1 = abs(k - 1.0) <= 1e-12
    dp, dm = n * (n + 1) // 2, n * (n - 1) // 2
    low = _Low(p.sense, cplx)

    if cplx:
        hp_ub = 0.5 if k1 else 1.0 / (k * k + k)
        hm_ub = None if k1 else 1.0 / (k * k - k)
    else:
        if k1:
            hp_ub, hm_ub = 1.0 / 3.0, None
        else:
            hm_ub = 1.0 / (2.0 * k * (k - 1.0))
            hp_ub = (1.0 / (2.0 * (k - 1.0) * (k + 2.0)) if k <= 2.0
                     else 1.0 / (k * k + 2.0 * k))
    hp = low.psd("Hp", dp, trace_bound=hp_ub)
    hm = low.psd("Hm", dm, trace_bound=hm_ub) if not k1 else None
    t3 = t4 = tr_blk = None
    if cplx:
        if k1:
            t3 = low.psd("T", n2, trace_bound=0.5)
        else:
            t3 = low.psd("T3", n2, trace_bound=1.0 / k)
            t4 = low.psd("T4", n2, trace_bound=hm_ub)
    elif not k1:
        tr_blk = low.psd("T", n2, trace_bound=(2.0 + k) * hp_ub)

    def swap_a(a, b):
        return (b // n) * n + (a % n), (a // n) * n + (b % n)

    def phi2(a, b):
        """Block terms of the marginal combination at entry (a, b)."""
        terms = [(hp, int(colp[a]), int(colp[b]),
                  (k + 1.0) * valp[a] * valp[b])]
        if hm is not None and valm[a] != 0.0 and valm[b] != 0.0:
            terms.append((hm, int(colm[a]), int(colm[b]),
                          (k - 1.0) * valm[a] * valm[b]))
        if not cplx:
            ap, bp = swap_a(a, b)
            terms.append((hp, int(colp[ap]), int(colp[bp]),
                          valp[ap] * valp[bp]))
            if hm is not None and valm[ap] != 0.0 and valm[bp] != 0.0:
                terms.append((hm, int(colm[ap]), int(colm[bp]),
                              -valm[ap] * valm[bp]))
        return terms

    def pair_with_phi2(g_entries):
        # Pairs a Hermitian operator (given entrywise) with the marginal
        # combination; the dicts feed _Low.row, whose convention is Tr(G X),
        # hence the transposed accumulation.
        acc: dict = {}
        for a, b, gv in g_entries:
            for h, i, j, c in phi2(b, a):
                d = acc.setdefault(id(h), [h, {}])[1]
                d[(j, i)] = d.get((j, i), 0.0) + gv * c
        return list(acc.values())

    # Normalization: the trace of the physical two-copy operator is one.
    low.row(1.0, pair_with_phi2([(a, a, k) for a in range(n2)]))

    # Objective on the physical combination.
    if p.pair_objective is not None:
        gobj = [(a, b, k * v)
                for a, b, v in _dense_entries(p.pair_objective.data)]
    else:
        x = p.objective.data
        gobj = [(i1 * n + j, i2 * n + j, k * x[i1, i2])
                for i1, i2, _v in _dense_entries(x) for j in range(n)]
    low.obj(pair_with_phi2(gobj))

    # Marginal rows: the constraint map applied to one copy must act like
    # its target times the reduced state of the other copy.
    for lf in p.constraints:
        if lf.coeff.nrows != n:
            raise BuildError("constraint dimension mismatch")
        if lf.relation != EQ:
            continue
        cmt = lf.coeff.data - lf.target * np.eye(n)
        cent = _dense_entries(cmt)
        if not cent:
            continue
        for desc in hermitian_basis_indices(n, program_field):
            beta = hermitian_basis_matrix(n, desc)
            bent = _dense_entries(beta)
            g_entries = [(i1 * n + j1, i2 * n + j2, cv * bv)
                         for i1, i2, cv in cent for j1, j2, bv in bent]
            low.row(0.0, pair_with_phi2(g_entries))

    # Scalar inequalities become one-sided operator constraints on the
    # second copy, realized by a PSD slack block.
    for li, lf in enumerate(p.constraints):
        if lf.relation != LEQ:
            continue
        c_mat = lf.coeff.data
        lam_min = float(np.linalg.eigvalsh(c_mat).min())
        s_ub = max(0.0, (lf.target - lam_min) / k)
        slk = low.psd(f"leq_slack_{li}", n, trace_bound=s_ub)
        for u in range(n):
            for v in range(u, n):
                terms = [(slk, u, v, 1.0)]
                for i in range(n):
                    for h, ii, jj, c in phi2(i * n + u, i * n + v):
                        terms.append((h, ii, jj, -lf.target * c))
                for i2, i1, cv in _dense_entries(c_mat):
                    for h, ii, jj, c in phi2(i1 * n + u, i2 * n + v):
                        terms.append((h, ii, jj, cv * c))
                low.scalar_rows(terms)

    for li, lmi in enumerate(p.lmis):
        dout = lmi.out_dim
        z_mat = lmi.bound.data
        s_ub = float(np.real(np.trace(z_mat)))
        for coeff, unit in lmi.terms:
            ev = np.linalg.eigvalsh(coeff.data)
            s_ub += abs(np.real(np.trace(unit.data))) * float(
                np.max(np.abs(ev)))
        s_ub = max(0.0, s_ub / k)
        dim_s = dout * n
        slk = low.psd(f"lmi_slack_{li}", dim_s, trace_bound=s_ub)
        for zu in range(dim_s):
            for wv in range(zu, dim_s):
                z, u = divmod(zu, n)
                w, v = divmod(wv, n)
                terms = [(slk, zu, wv, 1.0)]
                zzw = z_mat[z, w]
                if zzw != 0:
                    for i in range(n):
                        for h, ii, jj, c in phi2(i * n + u, i * n + v):
                            terms.append((h, ii, jj, -zzw * c))
                for coeff, unit in lmi.terms:
                    uzw = unit.data[z, w]
                    if uzw == 0:
                        continue
                    for i2, i1, cv in _dense_entries(coeff.data):
                        for h, ii, jj, c in phi2(i1 * n + u, i2 * n + v):
                            terms.append((h, ii, jj, uzw * cv * c))
                low.scalar_rows(terms)

    # Optional pinning of the reduced state itself (membership testing).
    if fixed_state is not None:
        if not k1:
            raise BuildError("state pinning is only meaningful at rank "
                             "bound 1")
        j_mat = fixed_state.data if isinstance(fixed_state, FieldMatrix) \
            else np.asarray(fixed_state)
        if j_mat.shape != (n, n):
            raise BuildError("pinned state dimension mismatch")
        for desc in hermitian_basis_indices(n, program_field):
            f = hermitian_basis_matrix(n, desc)
            fent = _dense_entries(f)
            g_entries = [(i1 * n + j, i2 * n + j, k * fv)
                         for i1, i2, fv in fent for j in range(n)]
            target = float(np.real(np.trace(f @ j_mat)))
            low.row(target, pair_with_phi2(g_entries))

    # Linking rows for the transpose-type blocks.
    for a in range(n2):
        for b in range(a, n2):
            ap, bp = swap_a(a, b)
            vpp = valp[ap] * valp[bp]
            vmm = valm[ap] * valm[bp]
            cpa, cpb = int(colp[ap]), int(colp[bp])
            cma, cmb = int(colm[ap]), int(colm[bp])
            if cplx:
                if k1:
                    low.scalar_rows([(t3, a, b, 1.0),
                                     (hp, cpa, cpb, -vpp)])
                else:
                    terms = [(t3, a, b, 1.0),
                             (hp, cpa, cpb, -(1.0 + k) * vpp)]
                    terms4 = [(t4, a, b, 1.0), (hp, cpa, cpb, -vpp)]
                    if vmm != 0.0:
                        terms.append((hm, cma, cmb, -(1.0 - k) * vmm))
                        terms4.append((hm, cma, cmb, -vmm))
                    low.scalar_rows(terms)
                    low.scalar_rows(terms4)
            elif not k1:
                terms = [(tr_blk, a, b, 1.0),
                         (hp, int(colp[a]), int(colp[b]),
                          -2.0 * valp[a] * valp[b]),
                         (hp, cpa, cpb, -k * vpp)]
                if vmm != 0.0:
                    terms.append((hm, cma, cmb, k * vmm))
                low.scalar_rows(terms)

    if not cplx:
        _real_structure_rows(low, hp, hm, n, colp, valp, colm, valm, k1)

    meta = {"level": "L2Reduced", "k": k, "field": program_field,
            "ppt": True, "n": n}
    return low.build(meta)


def _real_structure_rows(low, hp, hm, n, colp, valp, colm, valm, k1):
    """Transpose-invariance and swap-invariance rows of the real reduction."""
    n2 = n * n

    def swap_a(a, b):
        return (b // n) * n + (a % n), (a // n) * n + (b % n)

    def swap_fac(a):
        return (a % n) * n + a // n

    def hsum_terms(a, b, sign_minus, scale):
        out = [(hp, int(colp[a]), int(colp[b]), scale * valp[a] * valp[b])]
        vm = valm[a] * valm[b]
        if hm is not None and vm != 0.0:
            out.append((hm, int(colm[a]), int(colm[b]),
                        sign_minus * scale * vm))
        return out

    def mterm(x, y, scale):
        # Entry (x, y) of the transposed swap-type component.
        xp, yp = swap_a(x, y)
        return hsum_terms(xp, yp, -1.0, scale)

    for a in range(n2):
        for b in range(a, n2):
            ap, bp = swap_a(a, b)
            if {ap, bp} != {a, b}:
                low.scalar_rows(hsum_terms(ap, bp, 1.0, 1.0)
                                + hsum_terms(a, b, 1.0, -1.0))
            if k1:
                continue
            at = swap_fac(a)
            if at != a:
                low.scalar_rows(mterm(at, b, 1.0) + mterm(a, b, -1.0))
            bt = swap_fac(b)
            if bt != b and (bt, a) != (at, b):
                low.scalar_rows(mterm(bt, a, 1.0) + mterm(a, b, -1.0))


# -- generic level N -----------------------------------------------------------

def _int_rank(k: float) -> int:
    ki = int(round(k))
    if abs(k - ki) > 1e-9 or ki < 1:
        raise BuildError("the generic level needs an integer rank bound; "
                         "non-integer bounds only exist in the reduced form")
    return ki


def _embedded_pair_op(g: np.ndarray, n: int, kk: int) -> np.ndarray:
    """Lift an (n^2, n^2) two-party coefficient onto two (n*kk)-dim parties."""
    local = n * kk
    t = np.asarray(g).reshape(n, n, n, n)
    eye = np.eye(kk)
    out = np.einsum("ijkl,ab,cd->iajbkcld", t, eye, eye, optimize=True)
    return out.reshape(local * local, local * local)


def build_levelN(p: RankSdp, spec: LevelSpec, fixed_state=None,
                 compressed: bool = True) -> ConicProgram:
    """Symmetric-extension program over N parties of dimension n*k.

    The PSD variable lives on the N-party symmetric subspace (compressed
    through the bosonic isometry); set ``compressed=False`` only for small
    cross-checks, where the full extension is kept with explicit support
    rows instead.
    """
    if not p.normalized:
        raise BuildError("the generic level expects a normalized problem")
    n = p.dim_n
    kk = _int_rank(p.rank_bound_k)
    nn = spec.n_parties
    field = spec.field_override or p.field
    if field == REAL and p.field == COMPLEX:
        raise BuildError("cannot lower a complex problem over the reals")
    cplx = field == COMPLEX
    local = n * kk
    big = local ** nn
    if big * big > SIZE_BUDGET:
        raise BuildError(
            f"extension dimension {big} exceeds the size budget")
    lr = local ** (nn - 1)
    btrue = symmetric_basis(local, nn)
    if compressed:
        bmat = btrue
    else:
        if big > 40:
            raise BuildError("uncompressed extensions are limited to "
                             "dimension 40")
        bmat = np.eye(big)
    dim_c = bmat.shape[1]
    b2 = symmetric_basis(local, nn - 1)
    d2 = b2.shape[1]
    bt = bmat.reshape(local, lr, dim_c)

    low = _Low(p.sense, cplx)
    cblk = low.psd("Phi", dim_c, trace_bound=1.0)

    def herm_dict(m):
        return {(i, j): v for i, j, v in _dense_entries(m)}

    def compress(full):
        return bmat.T @ full @ bmat

    def marg_map(g_loc):
        """Coefficients of the compressed one-party marginal condition.

        Returns K with K[e, f] the (dim_c, dim_c) coefficient array such
        that the lifted operator's (e, f) entry is sum K[e,f,g,h]*C[g,h].
        """
        t1 = np.einsum("xz,zug->xug", g_loc, bt, optimize=True)
        t2 = np.einsum("ue,xug->xeg", b2.conj(), t1, optimize=True)
        t4 = np.einsum("xvh,vf->xfh", bt.conj(), b2, optimize=True)
        return np.einsum("xeg,xfh->efgh", t2, t4, optimize=True)

    # Normalization.
    low.row(1.0, [(cblk, {(i, i): 1.0 for i in range(dim_c)})])

    # Objective.
    if p.pair_objective is not None:
        if nn < 2:
            raise BuildError("pair objectives need at least two parties")
        g2 = _embedded_pair_op(p.pair_objective.data, n, kk)
        full = np.kron(g2, np.eye(local ** (nn - 2)))
    else:
        full = np.kron(np.kron(p.objective.data, np.eye(kk)), np.eye(lr))
    low.obj([(cblk, herm_dict(compress(full)))])

    # Marginal conditions from the equality functionals.
    for lf in p.constraints:
        if lf.coeff.nrows != n:
            raise BuildError("constraint dimension mismatch")
        if lf.relation != EQ:
            continue
        cmt = lf.coeff.data - lf.target * np.eye(n)
        if not _dense_entries(cmt):
            continue
        g_loc = np.kron(cmt, np.eye(kk))
        kmap = marg_map(g_loc)
        for e in range(d2):
            for f in range(e, d2):
                terms = [(cblk, g, h, v)
                         for g, h, v in _dense_entries(kmap[e, f])]
                if terms:
                    low.scalar_rows(terms)

    # One-sided functionals: operator condition on the remaining parties.
    for li, lf in enumerate(p.constraints):
        if lf.relation != LEQ:
            continue
        lam_min = float(np.linalg.eigvalsh(lf.coeff.data).min())
        slk = low.psd(f"leq_slack_{li}", d2,
                      trace_bound=max(0.0, lf.target - lam_min))
        g_loc = np.kron(lf.coeff.data, np.eye(kk)) \
            - lf.target * np.eye(local)
        kmap = marg_map(g_loc)
        for e in range(d2):
            for f in range(e, d2):
                terms = [(slk, e, f, 1.0)] + [
                    (cblk, g, h, v)
                    for g, h, v in _dense_entries(kmap[e, f])]
                low.scalar_rows(terms)

    for li, lmi in enumerate(p.lmis):
        dout = lmi.out_dim
        z_mat = lmi.bound.data
        s_ub = float(np.real(np.trace(z_mat)))
        kmaps = []
        for coeff, unit in lmi.terms:
            ev = np.linalg.eigvalsh(coeff.data)
            s_ub += abs(np.real(np.trace(unit.data))) * float(
                np.max(np.abs(ev)))
            kmaps.append(marg_map(np.kron(coeff.data, np.eye(kk))))
        k_id = marg_map(np.eye(local))
        dim_s = dout * d2
        slk = low.psd(f"lmi_slack_{li}", dim_s,
                      trace_bound=max(0.0, s_ub))
        for ze in range(dim_s):
            for wf in range(ze, dim_s):
                z, e = divmod(ze, d2)
                w, f = divmod(wf, d2)
                terms = [(slk, ze, wf, 1.0)]
                if z_mat[z, w] != 0:
                    terms += [(cblk, g, h, -z_mat[z, w] * v)
                              for g, h, v in _dense_entries(k_id[e, f])]
                for (coeff, unit), kmap in zip(lmi.terms, kmaps):
                    if unit.data[z, w] == 0:
                        continue
                    terms += [(cblk, g, h, unit.data[z, w] * v)
                              for g, h, v in _dense_entries(kmap[e, f])]
                low.scalar_rows(terms)

    # Optional pinning of the physical marginal.
    if fixed_state is not None:
        j_mat = fixed_state.data if isinstance(fixed_state, FieldMatrix) \
            else np.asarray(fixed_state)
        if j_mat.shape != (n, n):
            raise BuildError("pinned state dimension mismatch")
        for desc in hermitian_basis_indices(n, field):
            fb = hermitian_basis_matrix(n, desc)
            of = compress(np.kron(np.kron(fb, np.eye(kk)), np.eye(lr)))
            target = float(np.real(np.trace(fb @ j_mat)))
            low.row(target, [(cblk, herm_dict(of))])

    # Support rows for the uncompressed variant.
    if not compressed:
        proj = btrue @ btrue.T
        for a in range(big):
            for b in range(a, big):
                m = np.outer(proj[a, :], proj[:, b])
                m[a, b] -= 1.0
                terms = [(cblk, x, y, v) for x, y, v in _dense_entries(m)]
                if terms:
                    low.scalar_rows(terms)

    if spec.ppt and nn >= 2:
        _levelN_ppt(low, cblk, bmat, local, nn, cplx)

    return low.build({"level": "LN", "k": float(kk), "field": field,
                      "ppt": bool(spec.ppt), "n": n, "n_parties": nn,
                      "local_dim": local, "compressed": compressed})


def _levelN_ppt(low: _Low, cblk: _Handle, bmat: np.ndarray, local: int,
                nn: int, cplx: bool) -> None:
    """Partial-transpose conditions over leading party subsets.

    Complex programs get fresh PSD blocks linked to the transposed,
    recompressed extension; real programs only need transpose-invariance
    rows on the existing variable.
    """
    big = local ** nn
    dim_c = bmat.shape[1]
    bsp = sp.csr_matrix(bmat)
    qc = sp.kron(bsp, bsp, format="csr")
    for s in range(1, nn // 2 + 1):
        lrs = local ** (nn - s)
        idx = np.arange(big * big, dtype=np.int64)
        a, b = idx // big, idx % big
        x1, x2 = a // lrs, a % lrs
        y1, y2 = b // lrs, b % lrs
        src = (y1 * lrs + x2) * big + (x1 * lrs + y2)
        qperm = qc[src]
        if cplx:
            bs = sp.csr_matrix(symmetric_basis(local, s))
            bns = sp.csr_matrix(symmetric_basis(local, nn - s))
            us = sp.kron(bs, bns, format="csr")
            dim_t = us.shape[1]
            that = low.psd(f"PT{s}", dim_t, trace_bound=1.0)
            mmap = (sp.kron(us.T, us.T, format="csr") @ qperm).tocsr()
            for e in range(dim_t):
                for f in range(e, dim_t):
                    row = mmap.getrow(e * dim_t + f)
                    terms = [(that, e, f, -1.0)]
                    for col, val in zip(row.indices, row.data):
                        if abs(val) > 1e-14:
                            terms.append(
                                (cblk, int(col) // dim_c,
                                 int(col) % dim_c, val))
                    low.scalar_rows(terms)
        else:
            rmap = (qc.T @ qperm).tocsr()
            for e in range(dim_c):
                for f in range(e, dim_c):
                    row = rmap.getrow(e * dim_c + f)
                    acc: dict = {}
                    for col, val in zip(row.indices, row.data):
                        if abs(val) > 1e-14:
                            acc[(int(col) // dim_c, int(col) % dim_c)] = val
                    acc[(e, f)] = acc.get((e, f), 0.0) - 1.0
                    terms = [(cblk, g, h, v) for (g, h), v in acc.items()
                             if abs(v) > 1e-12]
                    if terms:
                        low.scalar_rows(terms)


# -- dispatch, sweeps, point extraction ----------------------------------------

def build(p: RankSdp, spec: LevelSpec) -> ConicProgram:
    if spec.level == "L1":
        return build_level1(p)
    if spec.level == "L2Reduced":
        field = spec.field_override or p.field
        if field == REAL:
            return build_level2_reduced_real(p)
        return build_level2_reduced_complex(p)
    return build_levelN(p, spec)


def rank_parameter_sweep(p: RankSdp, ks, level: LevelSpec | None = None,
                         cfg=None):
    """Solve the same relaxation for each rank bound in ``ks``.

    Returns a list of (k, value).  Values should be monotone in k (larger
    bounds relax the program); violations beyond solver accuracy raise a
    warning rather than an error.
    """
    from .solver import SolverConfig, solve

    level = level or LevelSpec("L2Reduced")
    cfg = cfg or SolverConfig()
    out: list[tuple[float, float]] = []
    sgn = 1.0 if p.sense == "max" else -1.0
    for kv in ks:
        kv = float(kv)
        if kv < 1.0:
            raise BuildError("rank bounds below 1 are meaningless")
        q = dataclasses.replace(p, rank_bound_k=kv)
        sol = solve(build(q, level), cfg)
        out.append((kv, sol.primal_value))
    for (k0, v0), (k1, v1) in zip(out, out[1:]):
        if k1 > k0 and np.isfinite(v0) and np.isfinite(v1) \
                and sgn * (v1 - v0) < -1e-7 * max(1.0, abs(v0)):
            warnings.warn(
                f"value decreased from k={k0} to k={k1} beyond solver "
                "accuracy; tighten tolerances", RuntimeWarning)
    return out


@dataclass(frozen=True)
class ReducedPoint:
    """Feasible point of the reduced two-copy program in operator form."""

    field: str
    k: float
    n: int
    phi_i: np.ndarray
    phi_v: np.ndarray
    phi_t: np.ndarray | None = None  # transposed swap component, real only


def _pt2(m: np.ndarray, n: int) -> np.ndarray:
    """Partial transpose on the first factor of an (n*n, n*n) matrix."""
    t = m.reshape(n, n, n, n)
    return np.ascontiguousarray(t.transpose(2, 1, 0, 3)).reshape(n * n, n * n)


def reduced_point(cp: ConicProgram, sol) -> ReducedPoint:
    """Recover the two-copy components from a solved reduced program."""
    meta = cp.metadata
    if meta.get("level") != "L2Reduced":
        raise BuildError("not a reduced two-copy program")
    n = int(meta["n"])
    k = float(meta["k"])
    field = meta["field"]
    cplx = field == COMPLEX
    mats = sol.primal_point
    named = {}
    for info, m in zip(meta["blocks_info"], mats):
        named[info["name"]] = real_from_embed(m) if info["complex"] else m
    up, um = sym_antisym_isometries(n)
    hplus = up @ named["Hp"] @ up.conj().T
    if "Hm" in named:
        hminus = um @ named["Hm"] @ um.conj().T
    else:
        hminus = np.zeros_like(hplus)
    phi_i = hplus + hminus
    phi_v = hplus - hminus
    phi_t = None if cplx else _pt2(phi_v, n)
    return ReducedPoint(field, k, n, phi_i, phi_v, phi_t)


def reconstruct_at_rank(point: ReducedPoint, k_new: float) -> ReducedPoint:
    """Map a feasible two-copy point to one for a larger rank bound."""
    k, kp = point.k, float(k_new)
    if kp < k - 1e-12:
        raise BuildError("feasibility only transfers to larger rank bounds")
    if abs(kp - k) <= 1e-12:
        return point
    if kp <= 1.0 + 1e-12:
        raise BuildError("cannot re-target the rank bound to 1")
    n = point.n
    vmat = swap_operator(n).data
    if point.field == COMPLEX:
        den = kp * (kp * kp - 1.0)
        ci = k * (k * kp - 1.0) / den
        cv = k * (kp - k) / den
        phi_i = ci * point.phi_i + cv * point.phi_v
        phi_v = vmat @ phi_i
        return ReducedPoint(point.field, kp, n, phi_i, phi_v, None)
    den = kp * (kp + 2.0) * (kp - 1.0)
    ci = k * (k * kp + k - 2.0) / den
    cv = k * (kp - k) / den
    phi_i = ci * point.phi_i + cv * (point.phi_v + point.phi_t)
    phi_v = vmat @ phi_i
    return ReducedPoint(point.field, kp, n, phi_i, phi_v, _pt2(phi_v, n))


def check_point_feasible(p: RankSdp, point: ReducedPoint) -> dict:
    """Residuals of the reduced two-copy feasibility conditions.

    Returns a dict with ``min_eig`` (most negative eigenvalue over the
    required PSD combinations), ``relation``, ``norm`` and ``marginal``
    residuals; all should be >= -tol resp. <= tol for a feasible point.
    """
    n, k = point.n, point.k
    cplx = point.field == COMPLEX
    vmat = swap_operator(n).data
    phi_i, phi_v = point.phi_i, point.phi_v

    combos = [phi_i + phi_v, phi_i - phi_v]
    if cplx:
        combos.append(_pt2(phi_i + k * phi_v, n))
        combos.append(_pt2(phi_i, n))
    else:
        combos.append(phi_i + phi_v + k * point.phi_t)
    min_eig = min(float(np.linalg.eigvalsh(
        0.5 * (m + m.conj().T)).min()) for m in combos)

    rel = np.linalg.norm(vmat @ phi_i - phi_v)
    if not cplx:
        rel = max(rel, np.linalg.norm(_pt2(phi_i, n) - phi_i))
        rel = max(rel, np.linalg.norm(point.phi_t - _pt2(phi_v, n)))
        rel = max(rel, np.linalg.norm(vmat @ point.phi_t - point.phi_t))

    trace = k * k * np.trace(phi_i) + k * np.trace(phi_v)
    comb = k * phi_i + phi_v
    if not cplx:
        trace = trace + k * np.trace(point.phi_t)
        comb = comb + point.phi_t
    norm_res = abs(float(np.real(trace)) - 1.0)

    marg = 0.0
    eye = np.eye(n)
    for lf in p.constraints:
        if lf.relation != EQ:
            continue
        g = np.kron(lf.coeff.data - lf.target * eye, eye)
        prod = (g @ comb).reshape(n, n, n, n)
        red = np.einsum("iuiv->uv", prod)
        marg = max(marg, float(np.linalg.norm(red)))
    return {"min_eig": min_eig, "relation": float(rel),
            "norm": norm_res, "marginal": marg}
