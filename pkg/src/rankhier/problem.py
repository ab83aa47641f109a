"""Canonical description of rank-bounded semidefinite problems.

A :class:`RankSdp` is a trace-linear objective over a PSD variable with
scalar trace constraints, an optional matrix inequality list, a trace
normalization flag, and a real rank bound (non-integer bounds interpolate
between integer ranks in the relaxations).  Transformations here normalize
problems that do not arrive in that shape: an off-diagonal PSD embedding for
non-PSD rectangular variables, two routes for adding a missing trace
normalization, and the lift of quadratic objectives to a two-copy operator.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .linalg import (COMPLEX, REAL, FieldMatrix, fmat, hermitian_basis_indices,
                     hermitian_basis_matrix, swap_operator)

EQ = "eq"
LEQ = "leq"


class ProblemFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LinearFunctional:
    """One scalar constraint row: Tr(coeff . rho) relation target."""

    coeff: FieldMatrix
    target: float
    relation: str = EQ

    def __post_init__(self):
        if self.relation not in (EQ, LEQ):
            raise ProblemFormatError(f"unknown relation {self.relation!r}")
        c = self.coeff
        dev = np.max(np.abs(c.data - c.data.conj().T), initial=0.0)
        if dev > 1e-8 * (1.0 + np.max(np.abs(c.data), initial=0.0)):
            raise ProblemFormatError(
                "constraint coefficient must be Hermitian so its value on "
                "Hermitian arguments is real")
        object.__setattr__(self, "target", float(self.target))

    def value(self, rho: np.ndarray) -> float:
        return float(np.real(np.trace(self.coeff.data @ rho)))


@dataclass(frozen=True)
class LmiLeq:
    """Matrix inequality sum_j Tr(coeff_j rho) unit_j <= bound (PSD order)."""

    terms: tuple  # of (coeff: FieldMatrix on the variable, unit: FieldMatrix)
    bound: FieldMatrix

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        d = self.bound.nrows
        for coeff, unit in self.terms:
            if unit.nrows != d or unit.ncols != d:
                raise ProblemFormatError(
                    "matrix-inequality units must match the bound dimension")

    @property
    def out_dim(self) -> int:
        return self.bound.nrows

    def value(self, rho: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(self.bound.data)
        for coeff, unit in self.terms:
            acc = acc + np.real(np.trace(coeff.data @ rho)) * unit.data
        return acc


@dataclass(frozen=True)
class QuadraticObjective:
    """Weighted sum of Tr(X rho Y rho) and Tr(X rho) Tr(Y rho) terms.

    ``pair_terms`` entries are (X, Y, kind, weight) with kind "sandwich" for
    the first form and "product_of_traces" for the second.
    """

    pair_terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "pair_terms", tuple(self.pair_terms))
        for x, y, kind, _w in self.pair_terms:
            if kind not in ("sandwich", "product_of_traces"):
                raise ProblemFormatError(f"unknown quadratic kind {kind!r}")
            if x.nrows != y.nrows or x.nrows != x.ncols:
                raise ProblemFormatError("quadratic terms must be square and "
                                         "of a common dimension")

    def value(self, rho: np.ndarray) -> float:
        total = 0.0
        for x, y, kind, w in self.pair_terms:
            if kind == "sandwich":
                total += w * np.real(np.trace(x.data @ rho @ y.data @ rho))
            else:
                total += w * np.real(np.trace(x.data @ rho)
                                     * np.trace(y.data @ rho))
        return float(total)


@dataclass(frozen=True)
class RankSdp:
    field: str
    dim_n: int
    objective: FieldMatrix
    constraints: tuple = ()
    normalized: bool = True
    rank_bound_k: float = 1.0
    sense: str = "max"
    lmis: tuple = ()
    #: optional two-copy objective operator; when present the relaxations
    #: optimize Tr[pair_objective (rho x rho)] instead of Tr(objective rho)
    pair_objective: FieldMatrix | None = None

    def __post_init__(self):
        if self.field not in (REAL, COMPLEX):
            raise ProblemFormatError(f"unknown field {self.field!r}")
        if self.sense not in ("max", "min"):
            raise ProblemFormatError(f"unknown sense {self.sense!r}")
        if self.dim_n < 1:
            raise ProblemFormatError("dim_n must be positive")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "lmis", tuple(self.lmis))
        k = float(self.rank_bound_k)
        if k < 1.0:
            raise ProblemFormatError("rank_bound_k must be >= 1")
        if k > self.dim_n:
            warnings.warn(
                f"rank bound {k} exceeds the dimension {self.dim_n}; "
                "clamped (the constraint is vacuous beyond n)", stacklevel=2)
            k = float(self.dim_n)
        object.__setattr__(self, "rank_bound_k", k)
        if self.objective.nrows != self.dim_n or \
                self.objective.ncols != self.dim_n:
            raise ProblemFormatError("objective dimension must equal dim_n")
        if self.pair_objective is not None:
            n2 = self.dim_n * self.dim_n
            if self.pair_objective.nrows != n2:
                raise ProblemFormatError(
                    "pair objective must act on two copies (dim n^2)")

    def objective_value(self, rho: np.ndarray) -> float:
        if self.pair_objective is not None:
            return float(np.real(np.trace(
                self.pair_objective.data @ np.kron(rho, rho))))
        return float(np.real(np.trace(self.objective.data @ rho)))

    # JSON problem-file format -------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "field": self.field,
            "dim_n": self.dim_n,
            "objective": self.objective.to_json_dict(),
            "constraints": [
                {"coeff": lf.coeff.to_json_dict(), "target": lf.target,
                 "relation": lf.relation}
                for lf in self.constraints
            ],
            "normalized": self.normalized,
            "rank_bound": self.rank_bound_k,
            "sense": self.sense,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(d: dict) -> "RankSdp":
        try:
            return RankSdp(
                field=d["field"],
                dim_n=int(d["dim_n"]),
                objective=FieldMatrix.from_json_dict(d["objective"],
                                                     "hermitian"),
                constraints=tuple(
                    LinearFunctional(
                        FieldMatrix.from_json_dict(cd["coeff"], "hermitian"),
                        float(cd["target"]), cd.get("relation", EQ))
                    for cd in d.get("constraints", [])),
                normalized=bool(d.get("normalized", True)),
                rank_bound_k=float(d.get("rank_bound", 1.0)),
                sense=d.get("sense", "max"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemFormatError(f"bad problem JSON: {exc}") from exc

    @staticmethod
    def loads(s: str) -> "RankSdp":
        return RankSdp.from_json_dict(json.loads(s))


def validate(p: RankSdp) -> list[str]:
    """Diagnostics only; an empty list means no issues found."""
    issues = []
    n = p.dim_n
    for idx, lf in enumerate(p.constraints):
        if lf.coeff.nrows != n or lf.coeff.ncols != n:
            issues.append(
                f"constraint {idx}: coefficient is "
                f"{lf.coeff.nrows}x{lf.coeff.ncols}, expected {n}x{n}")
        if p.field == REAL and lf.coeff.field == COMPLEX:
            issues.append(f"constraint {idx}: complex coefficient in a real "
                          "problem")
    # Contradictions: identical coefficients, incompatible targets.
    eqs = [(i, lf) for i, lf in enumerate(p.constraints)
           if lf.relation == EQ and lf.coeff.nrows == n and lf.coeff.ncols == n]
    for a in range(len(eqs)):
        for b in range(a + 1, len(eqs)):
            ia, fa = eqs[a]
            ib, fb = eqs[b]
            if fa.coeff.data.shape != fb.coeff.data.shape:
                continue
            scale = 1.0 + np.max(np.abs(fa.coeff.data), initial=0.0)
            if np.max(np.abs(fa.coeff.data - fb.coeff.data),
                      initial=0.0) <= 1e-12 * scale \
                    and abs(fa.target - fb.target) > 1e-9:
                issues.append(
                    f"constraints {ia} and {ib}: identical coefficients with "
                    f"targets {fa.target} and {fb.target}")
    if p.field == REAL and p.objective.field == COMPLEX:
        issues.append("objective: complex matrix in a real problem")
    return issues


def _offdiag_lift(g: np.ndarray, m: int, n: int, fld: str) -> FieldMatrix:
    """Hermitian (m+n)-dim operator with <lift, Omega> = Re Tr(g^dag omega)."""
    d = m + n
    dtype = np.complex128 if fld == COMPLEX else np.float64
    out = np.zeros((d, d), dtype=dtype)
    out[:m, m:] = g / 2.0
    out[m:, :m] = g.conj().T / 2.0
    return FieldMatrix(out, fld, "hermitian")


def psd_embed(omega_dims: tuple, objective_X: FieldMatrix,
              constraints, trace_bound_R: float,
              rank_bound_k: float = 1.0, sense: str = "max") -> RankSdp:
    """Normalize a problem over a non-PSD (rectangular) variable.

    The variable omega (m x n, operator norm at most R) becomes the
    off-diagonal corner of a PSD matrix Omega of dimension m+n with
    Tr(Omega) = 2R; after dividing by 2R the result is a normalized RankSdp.
    Objective and constraint coefficients are pre-scaled by 2R so optimal
    values carry over unchanged.  Objective semantics on the original
    variable: Re Tr(objective_X^dag omega); constraints likewise.
    """
    m, n = omega_dims
    if trace_bound_R <= 0:
        raise ProblemFormatError("trace bound R must be positive")
    if objective_X.nrows != m or objective_X.ncols != n:
        raise ProblemFormatError(f"objective must be {m}x{n}")
    fld = objective_X.field
    scale = 2.0 * trace_bound_R
    lifted_obj = _offdiag_lift(scale * objective_X.data, m, n, fld)
    lifted_cons = []
    for lf in constraints:
        if lf.coeff.nrows != m or lf.coeff.ncols != n:
            raise ProblemFormatError("constraint coefficient dimension "
                                     f"mismatch: expected {m}x{n}")
        lifted_cons.append(LinearFunctional(
            _offdiag_lift(scale * lf.coeff.data, m, n, fld),
            lf.target, lf.relation))
    return RankSdp(field=fld, dim_n=m + n, objective=lifted_obj,
                   constraints=tuple(lifted_cons), normalized=True,
                   rank_bound_k=rank_bound_k, sense=sense)


def psd_embed_corner(rho: np.ndarray, m: int, n: int,
                     trace_bound_R: float) -> np.ndarray:
    """Recover the original variable from a normalized embedded solution."""
    return 2.0 * trace_bound_R * np.asarray(rho)[:m, m:]


# Constraints on Omega mirror those on omega through the off-diagonal corner
# (LinearFunctional coefficients are already lifted by psd_embed).


@dataclass(frozen=True)
class DualWitness:
    """Weights c over the equality constraints with sum_j c_j coeff_j > 0."""

    c: tuple

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))


@dataclass(frozen=True)
class TraceBound:
    R: float


def normalize_unconstrained(p: RankSdp, strategy):
    """Add a missing trace normalization.

    Returns ``(normalized_problem, (a, b))`` where the original optimum is
    ``a * transformed_optimum + b``.

    With :class:`DualWitness`, the weighted combination of the equality
    constraints gives Tr(W rho) = w with W positive definite, and the change
    of variable w^{-1} sqrt(W) rho sqrt(W) normalizes the trace without
    changing the optimal value.  With :class:`TraceBound`, Tr(rho) <= R is
    imposed through the off-diagonal PSD embedding, with the corner kept PSD
    by a matrix inequality.
    """
    if p.normalized:
        return p, (1.0, 0.0)
    if isinstance(strategy, DualWitness):
        return _normalize_witness(p, strategy)
    if isinstance(strategy, TraceBound):
        return _normalize_trace_bound(p, strategy)
    raise ProblemFormatError(f"unknown strategy {strategy!r}")


def _normalize_witness(p: RankSdp, strategy: DualWitness):
    eqs = [lf for lf in p.constraints if lf.relation == EQ]
    if len(strategy.c) != len(eqs):
        raise ProblemFormatError(
            f"witness weights must match the {len(eqs)} equality constraints")
    dtype = np.complex128 if p.field == COMPLEX else np.float64
    w_mat = np.zeros((p.dim_n, p.dim_n), dtype=dtype)
    w_val = 0.0
    for cj, lf in zip(strategy.c, eqs):
        w_mat = w_mat + cj * lf.coeff.data
        w_val += cj * lf.target
    eigs, vecs = np.linalg.eigh(w_mat)
    if eigs.min() <= 1e-8:
        raise ProblemFormatError(
            f"witness combination is not positive definite "
            f"(min eigenvalue {eigs.min():.3e})")
    if w_val <= 0:
        raise ProblemFormatError("witness target combination must be positive")
    w_inv_sqrt = (vecs / np.sqrt(eigs)) @ vecs.conj().T

    def conj(g: np.ndarray) -> FieldMatrix:
        return FieldMatrix(w_val * (w_inv_sqrt @ g @ w_inv_sqrt), p.field,
                           "hermitian")

    new_cons = [LinearFunctional(conj(lf.coeff.data), lf.target, lf.relation)
                for lf in p.constraints]
    new_lmis = [LmiLeq(tuple((conj(coeff.data), unit)
                             for coeff, unit in lmi.terms), lmi.bound)
                for lmi in p.lmis]
    out = replace(p, objective=conj(p.objective.data),
                  constraints=tuple(new_cons), lmis=tuple(new_lmis),
                  normalized=True)
    return out, (1.0, 0.0)


def _normalize_trace_bound(p: RankSdp, strategy: TraceBound):
    if strategy.R <= 0:
        raise ProblemFormatError("trace bound R must be positive")
    n = p.dim_n
    fld = p.field
    scale = 2.0 * strategy.R

    def lift(g: np.ndarray) -> FieldMatrix:
        return _offdiag_lift(scale * g, n, n, fld)

    # Here the corner variable is rho itself (Hermitian), so
    # Re Tr(G^dag rho) = Tr(G rho) for Hermitian G; the corner must stay PSD.
    cons = [LinearFunctional(lift(lf.coeff.data), lf.target, lf.relation)
            for lf in p.constraints]
    corner_terms = []
    for desc in hermitian_basis_indices(n, fld):
        g = hermitian_basis_matrix(n, desc)
        corner_terms.append((lift(g), fmat(-_basis_as_field(g, fld), fld,
                                           "hermitian")))
    corner = LmiLeq(tuple(corner_terms),
                    FieldMatrix(np.zeros((n, n)), fld, "hermitian"))
    lmis = list(p.lmis)
    lifted_lmis = [LmiLeq(tuple((lift(coeff.data), unit)
                                for coeff, unit in lmi.terms), lmi.bound)
                   for lmi in lmis]
    out = RankSdp(field=fld, dim_n=2 * n, objective=lift(p.objective.data),
                  constraints=tuple(cons), normalized=True,
                  rank_bound_k=p.rank_bound_k, sense=p.sense,
                  lmis=tuple(lifted_lmis) + (corner,))
    return out, (1.0, 0.0)


def _basis_as_field(g: np.ndarray, fld: str) -> np.ndarray:
    if fld == REAL and np.iscomplexobj(g):
        raise ProblemFormatError("complex basis element in a real problem")
    return g


def lift_quadratic(q: QuadraticObjective, base: RankSdp) -> FieldMatrix:
    """Two-copy Hermitian operator realizing a quadratic objective.

    Returns G on C^n (x) C^n with Tr[G (rho x rho)] equal to q evaluated at
    rho, via Tr(X rho Y rho) = (1/2) Tr[{V, X x Y}(rho x rho)] with V the
    swap, and Tr(X rho) Tr(Y rho) = Tr[(X x Y)(rho x rho)].
    """
    n = base.dim_n
    dtype = np.complex128 if base.field == COMPLEX else np.float64
    acc = np.zeros((n * n, n * n), dtype=dtype)
    v = swap_operator(n).data
    for x, y, kind, w in q.pair_terms:
        if x.nrows != n:
            raise ProblemFormatError(
                f"quadratic term dimension {x.nrows} != problem dim {n}")
        xy = np.kron(x.data, y.data)
        if kind == "sandwich":
            acc = acc + w * (v @ xy + xy @ v) / 2.0
        else:
            acc = acc + w * xy
    herm_dev = np.max(np.abs(acc - acc.conj().T), initial=0.0)
    if herm_dev > 1e-10 * (1.0 + np.max(np.abs(acc), initial=0.0)):
        raise ProblemFormatError("lifted quadratic operator is not Hermitian")
    acc = (acc + acc.conj().T) / 2.0
    return FieldMatrix(acc, base.field, "hermitian")
