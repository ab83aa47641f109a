"""Solver-ready conic standard form.

A :class:`ConicProgram` is

    max/min  c . x
    s.t.     A x = b,
             x_block in K_block  for every block,

where each block is a PSD cone (stored in scaled svec coordinates), a
nonnegative orthant, or a free segment.  PSD blocks are real symmetric;
complex Hermitian data is lowered through the real embedding upstream.

The JSON dump (block list + triplet A, b, c) is the exchange format consumed
by external solver backends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

PSD = "psd"
NONNEG = "nonneg"
FREE = "free"

_SQRT2 = np.sqrt(2.0)


class ConicFormatError(ValueError):
    """Raised for malformed conic program data or JSON."""


@dataclass(frozen=True)
class Block:
    cone: str
    dim: int

    def __post_init__(self):
        if self.cone not in (PSD, NONNEG, FREE):
            raise ConicFormatError(f"unknown cone {self.cone!r}")
        if self.dim < 1:
            raise ConicFormatError("block dimension must be >= 1")

    @property
    def vec_len(self) -> int:
        if self.cone == PSD:
            return self.dim * (self.dim + 1) // 2
        return self.dim


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization: off-diagonals carry sqrt(2)."""
    d = m.shape[0]
    iu = np.triu_indices(d)
    v = np.asarray(m, dtype=np.float64)[iu].copy()
    v[iu[0] != iu[1]] *= _SQRT2
    return v


def smat(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    m = np.zeros((d, d))
    iu = np.triu_indices(d)
    vals = np.asarray(v, dtype=np.float64).copy()
    off = iu[0] != iu[1]
    vals[off] /= _SQRT2
    m[iu] = vals
    m[(iu[1], iu[0])] = vals
    return m


def svec_entries(d: int, i: int, j: int):
    """(flat index, scale) of entry (i, j) of a d-dim PSD block in svec coords.

    ``scale`` is such that coefficient c on matrix entry (i,j)+(j,i) maps to
    c*scale on the svec coordinate; for a symmetric coefficient matrix G the
    svec row is simply svec(G).
    """
    if i > j:
        i, j = j, i
    flat = i * d - i * (i - 1) // 2 + (j - i)
    return flat, (1.0 if i == j else _SQRT2)


@dataclass(frozen=True)
class ConicProgram:
    blocks: tuple
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    sense: str = "max"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        n = sum(bl.vec_len for bl in blocks)
        c = np.asarray(self.c, dtype=np.float64).ravel()
        b = np.asarray(self.b, dtype=np.float64).ravel()
        A = sp.csr_matrix(self.A, dtype=np.float64)
        if c.shape[0] != n:
            raise ConicFormatError(f"c has length {c.shape[0]}, expected {n}")
        if A.shape != (b.shape[0], n):
            raise ConicFormatError(
                f"A has shape {A.shape}, expected {(b.shape[0], n)}")
        if self.sense not in ("max", "min"):
            raise ConicFormatError(f"bad sense {self.sense!r}")
        c.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])

    @property
    def n_rows(self) -> int:
        return int(self.b.shape[0])

    def block_slices(self):
        out = []
        off = 0
        for bl in self.blocks:
            out.append(slice(off, off + bl.vec_len))
            off += bl.vec_len
        return out

    def split(self, x: np.ndarray):
        """Split a variable vector into per-block values (matrices for PSD)."""
        parts = []
        for bl, sl in zip(self.blocks, self.block_slices()):
            seg = np.asarray(x)[sl]
            parts.append(smat(seg, bl.dim) if bl.cone == PSD else seg.copy())
        return parts

    def join(self, parts) -> np.ndarray:
        segs = []
        for bl, p in zip(self.blocks, parts):
            segs.append(svec(np.asarray(p)) if bl.cone == PSD
                        else np.asarray(p, dtype=np.float64).ravel())
        return np.concatenate(segs) if segs else np.zeros(0)

    def identity_vec(self) -> np.ndarray:
        """svec of the identity on every PSD block, zeros elsewhere."""
        segs = []
        for bl in self.blocks:
            if bl.cone == PSD:
                segs.append(svec(np.eye(bl.dim)))
            else:
                segs.append(np.zeros(bl.vec_len))
        return np.concatenate(segs)

    def to_json_dict(self) -> dict:
        coo = self.A.tocoo()
        meta = {k: v for k, v in self.metadata.items()
                if _json_safe(v)}
        return {
            "blocks": [{"cone": bl.cone, "dim": bl.dim} for bl in self.blocks],
            "sense": self.sense,
            "c": self.c.tolist(),
            "b": self.b.tolist(),
            "A": {
                "shape": [self.n_rows, self.n_vars],
                "row": coo.row.tolist(),
                "col": coo.col.tolist(),
                "val": coo.data.tolist(),
            },
            "metadata": meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(d: dict) -> "ConicProgram":
        try:
            blocks = tuple(Block(bd["cone"], int(bd["dim"]))
                           for bd in d["blocks"])
            a = d["A"]
            m, n = (int(v) for v in a["shape"])
            A = sp.coo_matrix(
                (np.asarray(a["val"], dtype=np.float64),
                 (np.asarray(a["row"], dtype=np.int64),
                  np.asarray(a["col"], dtype=np.int64))),
                shape=(m, n)).tocsr()
            return ConicProgram(
                blocks=blocks,
                c=np.asarray(d["c"], dtype=np.float64),
                A=A,
                b=np.asarray(d["b"], dtype=np.float64),
                sense=d.get("sense", "max"),
                metadata=d.get("metadata", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConicFormatError(f"bad conic JSON: {exc}") from exc

    @staticmethod
    def loads(s: str) -> "ConicProgram":
        return ConicProgram.from_json_dict(json.loads(s))

    def with_metadata(self, **kw) -> "ConicProgram":
        meta = dict(self.metadata)
        meta.update(kw)
        return replace(self, metadata=meta)


def _json_safe(v) -> bool:
    try:
        json.dumps(v)
        return True
    except (TypeError, ValueError):
        return False


# -- presolve -----------------------------------------------------------------

PRESOLVE_ROW_LIMIT = 4000


class PresolveInfeasible(Exception):
    """The equality system is inconsistent (no x satisfies Ax = b).

    ``farkas_y`` holds a dual vector over the original rows with
    A^T y ~ 0 and b . y < 0, usable to certify the infeasibility.
    """

    def __init__(self, msg: str, farkas_y: np.ndarray | None = None):
        super().__init__(msg)
        self.farkas_y = farkas_y


def presolve(cp: ConicProgram, threshold: float = 1e-10) -> ConicProgram:
    """Drop linearly dependent equality rows; detect inconsistent duplicates.

    Uses pivoted Cholesky on the row Gram matrix (equivalent rank test to a
    rank-revealing QR of A^T at these scales).  Skipped, with a metadata
    note, above ``PRESOLVE_ROW_LIMIT`` rows: the solver tolerates dependent
    rows and the dense Gram factorization stops being desk-scale.

    Raises :class:`PresolveInfeasible` if a dependent row has an
    inconsistent right-hand side.
    """
    m = cp.n_rows
    if m == 0:
        return cp.with_metadata(presolve={"dropped": 0})
    if m > PRESOLVE_ROW_LIMIT:
        return cp.with_metadata(presolve={"skipped": "row-limit"})
    row_norms = np.sqrt(np.asarray(cp.A.multiply(cp.A).sum(axis=1)).ravel())
    # Numerically zero rows (cancellation residue from builders) must go
    # before normalization, or they turn into random unit directions.
    zero_floor = 1e-12 * max(1.0, float(row_norms.max(initial=0.0)))
    tiny = row_norms <= zero_floor
    bad_tiny = np.flatnonzero(tiny & (np.abs(cp.b) > 1e-8))
    if bad_tiny.size:
        i = int(bad_tiny[np.argmax(np.abs(cp.b[bad_tiny]))])
        y = np.zeros(m)
        y[i] = -1.0 / cp.b[i]
        raise PresolveInfeasible(
            "a numerically zero row has a nonzero right-hand side", y)
    nz = np.flatnonzero(~tiny)
    if nz.size == 0:
        return ConicProgram(
            blocks=cp.blocks, c=cp.c, A=cp.A[nz], b=cp.b[nz],
            sense=cp.sense, metadata=dict(cp.metadata),
        ).with_metadata(presolve={"dropped": int(m), "kept": 0,
                                  "row_index": []})
    A_nz = cp.A[nz]
    b_nz = cp.b[nz]
    m = nz.size
    row_norms = row_norms[nz]
    scale = row_norms
    D = sp.diags(1.0 / scale)
    An = D @ A_nz
    G = (An @ An.T).toarray()
    G = (G + G.T) / 2.0
    from scipy.linalg.lapack import dpstrf
    # Gram pivots are squared residual distances, so the natural tolerance
    # is threshold**2; that sits below float noise, which caps it instead.
    piv_tol = max(threshold * threshold, 256.0 * np.finfo(float).eps)
    _chol, piv, rank, _info = dpstrf(G + np.eye(m) * 0.0, lower=1,
                                     tol=piv_tol)
    piv = piv - 1  # LAPACK is 1-based
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    bn = b_nz / scale
    if drop.size:
        # Express each dropped (dependent) row in the kept rows and check b.
        Gkk = G[np.ix_(keep, keep)] + np.eye(rank) * 1e-14
        lam = np.linalg.solve(Gkk, G[np.ix_(keep, drop)])
        resid = bn[drop] - lam.T @ bn[keep]
        bad = np.abs(resid) > 1e-8 * (1.0 + np.abs(bn[drop]))
        if bad.any():
            # Farkas combination: the worst dropped row minus its expression
            # in the kept rows, pulled back through the row scaling.
            j = int(np.argmax(np.abs(resid) * bad))
            yn = np.zeros(m)
            yn[drop[j]] = 1.0
            yn[keep] -= lam[:, j]
            yn *= -np.sign(resid[j]) / abs(resid[j])
            y = np.zeros(cp.n_rows)
            y[nz] = yn / scale
            raise PresolveInfeasible(
                f"{int(bad.sum())} dependent equality rows have inconsistent "
                "right-hand sides", y)
    keep_orig = nz[keep]
    out = ConicProgram(
        blocks=cp.blocks,
        c=cp.c,
        A=cp.A[keep_orig],
        b=cp.b[keep_orig],
        sense=cp.sense,
        metadata=dict(cp.metadata),
    )
    return out.with_metadata(
        presolve={"dropped": int(cp.n_rows - rank), "kept": int(rank),
                  "row_index": [int(i) for i in keep_orig]})


# -- incremental construction helper -------------------------------------------

class ProgramBuilder:
    """Accumulates blocks, objective terms, and sparse equality rows."""

    def __init__(self, sense: str = "max"):
        self.sense = sense
        self._blocks: list[Block] = []
        self._offsets: list[int] = []
        self._n = 0
        self._c_entries: list[tuple[int, float]] = []
        self._rows_i: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._b: list[float] = []
        self.metadata: dict = {}

    def add_block(self, cone: str, dim: int) -> int:
        bl = Block(cone, dim)
        self._blocks.append(bl)
        self._offsets.append(self._n)
        self._n += bl.vec_len
        return len(self._blocks) - 1

    def block(self, idx: int) -> Block:
        return self._blocks[idx]

    def offset(self, idx: int) -> int:
        return self._offsets[idx]

    def coords_of_sym(self, block_idx: int, g: np.ndarray, tol: float = 0.0):
        """(global col indices, values) of <G, X_block> for symmetric G."""
        bl = self._blocks[block_idx]
        if bl.cone != PSD:
            raise ConicFormatError("coords_of_sym needs a PSD block")
        v = svec(g)
        if tol > 0.0:
            nz = np.abs(v) > tol
        else:
            nz = v != 0.0
        cols = np.nonzero(nz)[0] + self._offsets[block_idx]
        return cols, v[nz]

    def add_objective_sym(self, block_idx: int, g: np.ndarray,
                          weight: float = 1.0, tol: float = 1e-15):
        cols, vals = self.coords_of_sym(block_idx, g, tol)
        for c_, v_ in zip(cols, vals):
            self._c_entries.append((int(c_), weight * float(v_)))

    def add_objective_entry(self, block_idx: int, local_col: int, val: float):
        self._c_entries.append((self._offsets[block_idx] + local_col, val))

    def new_row(self, target: float) -> int:
        self._b.append(float(target))
        return len(self._b) - 1

    def row_add_sym(self, row: int, block_idx: int, g: np.ndarray,
                    weight: float = 1.0, tol: float = 1e-14):
        cols, vals = self.coords_of_sym(block_idx, g, tol)
        self._rows_i.extend([row] * len(cols))
        self._cols.extend(int(c_) for c_ in cols)
        self._vals.extend(weight * float(v_) for v_ in vals)

    def row_add_entry(self, row: int, block_idx: int, local_col: int,
                      val: float):
        self._rows_i.append(row)
        self._cols.append(self._offsets[block_idx] + local_col)
        self._vals.append(float(val))

    def build(self) -> ConicProgram:
        m = len(self._b)
        A = sp.coo_matrix(
            (np.asarray(self._vals, dtype=np.float64),
             (np.asarray(self._rows_i, dtype=np.int64),
              np.asarray(self._cols, dtype=np.int64))),
            shape=(m, self._n)).tocsr()
        A.sum_duplicates()
        c = np.zeros(self._n)
        for col, val in self._c_entries:
            c[col] += val
        return ConicProgram(
            blocks=tuple(self._blocks),
            c=c,
            A=A,
            b=np.asarray(self._b, dtype=np.float64),
            sense=self.sense,
            metadata=self.metadata,
        )
