"""Dense real/complex matrix algebra and tensor-structural operators.

Everything downstream (problem lowering, hierarchy construction, the solver)
consumes the helpers in this module: Kronecker products, partial trace and
partial transpose over an explicit tensor layout, swap operators, symmetric
projectors/bases, the Hermitian-to-real embedding, and the maximally
entangled projector.

All operations are pure functions over immutable values; matrices are stored
densely (the target scale is a few hundred to ~1500 rows).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations
from math import comb, isqrt

import numpy as np

REAL = "real"
COMPLEX = "complex"

_SYMMETRY_CLASSES = ("general", "symmetric", "hermitian", "psd")

#: Entrywise relative tolerance for declaring a matrix symmetric/Hermitian.
SYMMETRY_TOL = 1e-12

#: Reject tensor-space constructions with more than this many entries per row.
SIZE_BUDGET = 10**6


class MatrixFormatError(ValueError):
    """Raised for malformed matrix data or JSON."""


def _as_ndarray(m) -> np.ndarray:
    if isinstance(m, FieldMatrix):
        return m.data
    return np.asarray(m)


@dataclass(frozen=True)
class FieldMatrix:
    """A dense square (or rectangular) matrix over R or C.

    ``symmetry_class`` is one of ``general``, ``symmetric``, ``hermitian``,
    ``psd``.  Symmetric/Hermitian inputs that are off by more than rounding
    noise are rejected; small violations are symmetrized with a warning.
    """

    data: np.ndarray
    field: str = REAL
    symmetry_class: str = "general"

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MatrixFormatError("matrix data must be 2-dimensional")
        if self.field not in (REAL, COMPLEX):
            raise MatrixFormatError(f"unknown field {self.field!r}")
        if self.symmetry_class not in _SYMMETRY_CLASSES:
            raise MatrixFormatError(
                f"unknown symmetry class {self.symmetry_class!r}")
        dtype = np.float64 if self.field == REAL else np.complex128
        if self.field == REAL and np.iscomplexobj(arr):
            if np.max(np.abs(arr.imag), initial=0.0) > 1e-14 * (
                    1.0 + np.max(np.abs(arr.real), initial=0.0)):
                raise MatrixFormatError("complex entries in a real matrix")
            arr = arr.real
        arr = np.array(arr, dtype=dtype)
        if self.symmetry_class in ("symmetric", "hermitian", "psd"):
            if arr.shape[0] != arr.shape[1]:
                raise MatrixFormatError("symmetry requires a square matrix")
            dev = np.max(np.abs(arr - arr.conj().T), initial=0.0)
            scale = 1.0 + np.max(np.abs(arr), initial=0.0)
            if dev > 1e-8 * scale:
                raise MatrixFormatError(
                    f"matrix declared {self.symmetry_class} deviates from its "
                    f"adjoint by {dev:.3e}")
            if dev > SYMMETRY_TOL * scale:
                warnings.warn(
                    "input symmetrized: deviation %.3e above the %.0e "
                    "tolerance" % (dev, SYMMETRY_TOL), stacklevel=2)
            arr = (arr + arr.conj().T) / 2.0
        if self.symmetry_class == "psd":
            w = np.linalg.eigvalsh(arr)
            tr_scale = max(abs(np.trace(arr).real), 1.0)
            if w.min(initial=0.0) < -1e-8 * tr_scale:
                raise MatrixFormatError(
                    f"matrix declared PSD has eigenvalue {w.min():.3e}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def nrows(self) -> int:
        return self.data.shape[0]

    @property
    def ncols(self) -> int:
        return self.data.shape[1]

    def to_json_dict(self) -> dict:
        d = {
            "field": self.field,
            "nrows": self.nrows,
            "ncols": self.ncols,
            "re": np.real(self.data).tolist(),
        }
        if self.field == COMPLEX:
            d["im"] = np.imag(self.data).tolist()
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(d: dict, symmetry_class: str = "general") -> "FieldMatrix":
        try:
            fld = d["field"]
            nrows, ncols = int(d["nrows"]), int(d["ncols"])
            re = np.asarray(d["re"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise MatrixFormatError(f"bad matrix JSON: {exc}") from exc
        if re.shape != (nrows, ncols):
            raise MatrixFormatError(
                f"re has shape {re.shape}, expected {(nrows, ncols)}")
        if fld == COMPLEX:
            im = np.asarray(d.get("im", np.zeros_like(re)), dtype=np.float64)
            if im.shape != re.shape:
                raise MatrixFormatError("im shape does not match re")
            return FieldMatrix(re + 1j * im, COMPLEX, symmetry_class)
        if "im" in d and np.max(np.abs(np.asarray(d["im"])), initial=0.0) > 0:
            raise MatrixFormatError("real matrix carries nonzero im part")
        return FieldMatrix(re, REAL, symmetry_class)

    @staticmethod
    def loads(s: str, symmetry_class: str = "general") -> "FieldMatrix":
        return FieldMatrix.from_json_dict(json.loads(s), symmetry_class)


def fmat(data, field: str | None = None, symmetry_class: str = "general") -> FieldMatrix:
    """Convenience constructor; infers the field from the dtype if not given."""
    arr = np.asarray(data)
    if field is None:
        field = COMPLEX if np.iscomplexobj(arr) else REAL
    return FieldMatrix(arr, field, symmetry_class)


@dataclass(frozen=True)
class TensorLayout:
    """Ordered factor dimensions of a tensor-product space."""

    factor_dims: tuple = field(default_factory=tuple)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise MatrixFormatError("factor dims must be positive integers")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    def check(self, dim: int):
        if self.total_dim != dim:
            raise MatrixFormatError(
                f"layout {self.factor_dims} has total dim {self.total_dim}, "
                f"matrix has dim {dim}")


def _wrap_like(arr: np.ndarray, *sources) -> FieldMatrix:
    fld = COMPLEX if any(
        (s.field if isinstance(s, FieldMatrix) else
         (COMPLEX if np.iscomplexobj(np.asarray(s)) else REAL)) == COMPLEX
        for s in sources) else REAL
    if fld == REAL and np.iscomplexobj(arr):
        arr = arr.real
    return FieldMatrix(arr, fld)


def kron(a, b) -> FieldMatrix:
    """Kronecker product; real inputs are promoted when mixed with complex."""
    return _wrap_like(np.kron(_as_ndarray(a), _as_ndarray(b)), a, b)


def partial_trace(m, layout: TensorLayout, keep) -> FieldMatrix:
    """Trace out all tensor factors not listed in ``keep``.

    ``keep`` is an iterable of 0-based factor indices; the result is ordered
    by the kept factors in their original order.
    """
    arr = _as_ndarray(m)
    layout.check(arr.shape[0])
    if arr.shape[0] != arr.shape[1]:
        raise MatrixFormatError("partial trace requires a square matrix")
    dims = layout.factor_dims
    nf = len(dims)
    keep = sorted(set(int(i) for i in keep))
    if not keep or any(i < 0 or i >= nf for i in keep):
        raise MatrixFormatError("keep must be a nonempty subset of factors")
    t = arr.reshape(dims + dims)
    # Trace out dropped factors from the back so axis numbers stay valid.
    drop = [i for i in range(nf) if i not in keep]
    n_live = nf
    for i in reversed(drop):
        t = np.trace(t, axis1=i, axis2=i + n_live)
        n_live -= 1
    d_keep = int(np.prod([dims[i] for i in keep]))
    return _wrap_like(t.reshape(d_keep, d_keep), m)


def partial_transpose(m, layout: TensorLayout, parts) -> FieldMatrix:
    """Transpose the listed tensor factors; an involution, exact (no rounding)."""
    arr = _as_ndarray(m)
    layout.check(arr.shape[0])
    if arr.shape[0] != arr.shape[1]:
        raise MatrixFormatError("partial transpose requires a square matrix")
    dims = layout.factor_dims
    nf = len(dims)
    parts = set(int(i) for i in parts)
    if any(i < 0 or i >= nf for i in parts):
        raise MatrixFormatError("parts out of range")
    t = arr.reshape(dims + dims)
    axes = list(range(2 * nf))
    for i in parts:
        axes[i], axes[i + nf] = axes[i + nf], axes[i]
    t = t.transpose(axes)
    return _wrap_like(t.reshape(arr.shape), m)


def swap_operator(d: int) -> FieldMatrix:
    """The swap V = sum_ij |ij><ji| on C^d x C^d."""
    if d < 1:
        raise MatrixFormatError("d must be >= 1")
    v = np.zeros((d * d, d * d))
    idx = np.arange(d * d)
    i, j = divmod(idx, d)
    v[idx, j * d + i] = 1.0
    return FieldMatrix(v, REAL, "symmetric")


def _check_budget(d: int, n_parties: int):
    if d < 1 or n_parties < 1:
        raise MatrixFormatError("dimensions must be positive")
    if d**n_parties > SIZE_BUDGET:
        raise MatrixFormatError(
            f"symmetric subspace on dim {d}^{n_parties} exceeds the size budget")


def symmetric_basis(d: int, n_parties: int) -> np.ndarray:
    """Orthonormal basis of the symmetric subspace of (C^d)^{x N}.

    Returns a (d^N, C(d+N-1, N)) isometry whose columns are the bosonic
    occupation-number basis vectors, ordered lexicographically by occupation
    vector.
    """
    _check_budget(d, n_parties)
    N = n_parties
    dn = d**N
    words = []
    for w in combinations_with_replacement(range(d), N):
        occ = [0] * d
        for a in w:
            occ[a] += 1
        words.append((tuple(occ), w))
    words.sort(key=lambda t: t[0])
    cols = np.zeros((dn, len(words)))
    strides = [d**(N - 1 - i) for i in range(N)]
    for col, (_occ, w) in enumerate(words):
        seen = set()
        for p in permutations(w):
            if p in seen:
                continue
            seen.add(p)
            idx = sum(a * s for a, s in zip(p, strides))
            cols[idx, col] = 1.0
        cols[:, col] /= np.sqrt(len(seen))
    return cols


def symmetric_projector(d: int, n_parties: int) -> FieldMatrix:
    """Projector onto the symmetric subspace, (1/N!) sum of permutation ops."""
    b = symmetric_basis(d, n_parties)
    return FieldMatrix(b @ b.T, REAL, "symmetric")


def hermitian_to_real_embed(h) -> FieldMatrix:
    """[[Re h, -Im h], [Im h, Re h]]; each eigenvalue of h appears twice."""
    arr = _as_ndarray(h)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixFormatError("embedding requires a square matrix")
    dev = np.max(np.abs(arr - arr.conj().T), initial=0.0)
    if dev > 1e-10 * (1.0 + np.max(np.abs(arr), initial=0.0)):
        raise MatrixFormatError("embedding requires a Hermitian input")
    arr = (arr + arr.conj().T) / 2.0
    re, im = arr.real, arr.imag
    out = np.block([[re, -im], [im, re]])
    out = (out + out.T) / 2.0
    return FieldMatrix(out, REAL, "symmetric")


def real_from_embed(m) -> np.ndarray:
    """Inverse of :func:`hermitian_to_real_embed` (averages the redundancy)."""
    arr = _as_ndarray(m)
    n2 = arr.shape[0]
    if n2 % 2:
        raise MatrixFormatError("embedded matrix must have even dimension")
    n = n2 // 2
    p, r = arr[:n, :n], arr[n:, n:]
    q, qt = arr[n:, :n], arr[:n, n:]
    h = (p + r) / 2.0 + 1j * (q - qt) / 2.0
    return (h + h.conj().T) / 2.0


def max_entangled_projector(d: int) -> FieldMatrix:
    """Rank-1 projector onto |phi_d+> = (1/sqrt d) sum |aa>."""
    if d < 1:
        raise MatrixFormatError("d must be >= 1")
    v = np.zeros(d * d)
    v[np.arange(d) * d + np.arange(d)] = 1.0 / np.sqrt(d)
    return FieldMatrix(np.outer(v, v), REAL, "symmetric")


# -- Hermitian/symmetric operator bases used by the hierarchy lowering --------

def hermitian_basis_indices(d: int, field: str):
    """Index descriptors for an orthonormal Hermitian (or symmetric) basis.

    Yields (i, j, kind) with kind in {"diag", "sym", "antisym"}; "antisym"
    elements i(E_ij - E_ji)/sqrt(2) only appear for the complex field.  The
    corresponding matrices are orthonormal under <A, B> = Tr(A B).
    """
    out = []
    for i in range(d):
        out.append((i, i, "diag"))
    for i in range(d):
        for j in range(i + 1, d):
            out.append((i, j, "sym"))
    if field == COMPLEX:
        for i in range(d):
            for j in range(i + 1, d):
                out.append((i, j, "antisym"))
    return out


def hermitian_basis_matrix(d: int, desc) -> np.ndarray:
    i, j, kind = desc
    if kind == "diag":
        m = np.zeros((d, d))
        m[i, i] = 1.0
        return m
    if kind == "sym":
        m = np.zeros((d, d))
        m[i, j] = m[j, i] = 1.0 / np.sqrt(2.0)
        return m
    m = np.zeros((d, d), dtype=np.complex128)
    m[i, j] = 1j / np.sqrt(2.0)
    m[j, i] = -1j / np.sqrt(2.0)
    return m


def infer_square_side(n_total: int) -> int:
    """Side length n with n*n == n_total, or raise."""
    n = isqrt(n_total)
    if n * n != n_total:
        raise MatrixFormatError(f"{n_total} is not a perfect square")
    return n


def sym_antisym_isometries(n: int):
    """Isometries onto the swap-symmetric/antisymmetric subspaces of C^n x C^n.

    Returns (u_plus, u_minus) with shapes (n^2, n(n+1)/2) and (n^2, n(n-1)/2);
    columns are the standard (|ij>+|ji>)/sqrt2 style vectors, so each column
    has at most two nonzero entries.
    """
    n2 = n * n
    dp, dm = n * (n + 1) // 2, n * (n - 1) // 2
    up = np.zeros((n2, dp))
    um = np.zeros((n2, dm))
    cp = cm = 0
    s = 1.0 / np.sqrt(2.0)
    for i in range(n):
        up[i * n + i, cp] = 1.0
        cp += 1
    for i in range(n):
        for j in range(i + 1, n):
            up[i * n + j, cp] = s
            up[j * n + i, cp] = s
            cp += 1
            um[i * n + j, cm] = s
            um[j * n + i, cm] = -s
            cm += 1
    return up, um


def binom_sym_dim(d: int, n_parties: int) -> int:
    return comb(d + n_parties - 1, n_parties)
