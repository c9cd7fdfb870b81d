"""Dense linear algebra over labeled tensor-product spaces.

Basis convention: the leftmost factor is the most significant index, so for
factors with dimensions ``(d_0, ..., d_{k-1})`` the flat index of
``|i_0 ... i_{k-1}>`` is ``sum_k i_k * prod_{j>k} d_j``.  This is the ordering
produced by ``numpy.kron`` and by C-order reshapes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import LabelCollision, LabelMismatch, LabelNotFound, ShapeError, ValidationError

__all__ = [
    "LabeledSpace",
    "LabeledOperator",
    "ToleranceConfig",
    "DEFAULT_TOL",
    "kron_compose",
    "partial_trace",
    "permute_factors",
    "transpose_op",
    "max_entangled",
    "is_psd",
    "is_hermitian",
    "ptrace_array",
    "permute_array",
    "embed_identity",
    "min_eigenvalue",
]


@dataclass(frozen=True)
class ToleranceConfig:
    tol_herm: float = 1e-9
    tol_psd: float = 1e-9
    tol_trace: float = 1e-9
    tol_eq: float = 1e-7

    def __post_init__(self):
        for name in ("tol_herm", "tol_psd", "tol_trace", "tol_eq"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


DEFAULT_TOL = ToleranceConfig()


@dataclass(frozen=True)
class LabeledSpace:
    """Ordered tensor product of named subsystems."""

    factors: tuple[tuple[str, int], ...] = ()

    def __init__(self, factors: Iterable[Sequence] = ()):
        facs = tuple((str(lab), int(d)) for lab, d in factors)
        labels = [lab for lab, _ in facs]
        if len(set(labels)) != len(labels):
            raise LabelCollision(f"duplicate labels in {labels}")
        for lab, d in facs:
            if d < 1:
                raise ValidationError(f"factor {lab!r} has nonpositive dimension {d}")
        object.__setattr__(self, "factors", facs)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def __len__(self):
        return len(self.factors)

    def __contains__(self, label):
        return label in self.labels

    def __add__(self, other: "LabeledSpace") -> "LabeledSpace":
        return LabeledSpace(self.factors + other.factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelNotFound(f"label {label!r} not in {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def sub(self, labels: Iterable[str]) -> "LabeledSpace":
        """Subspace made of ``labels``, kept in this space's order."""
        wanted = set(labels)
        missing = wanted - set(self.labels)
        if missing:
            raise LabelNotFound(f"labels {sorted(missing)} not in {self.labels}")
        return LabeledSpace(f for f in self.factors if f[0] in wanted)

    def without(self, labels: Iterable[str]) -> "LabeledSpace":
        drop = set(labels)
        return LabeledSpace(f for f in self.factors if f[0] not in drop)

    def reordered(self, order: Sequence[str]) -> "LabeledSpace":
        if sorted(order) != sorted(self.labels) or len(order) != len(self.labels):
            raise LabelMismatch(f"{list(order)} is not a permutation of {list(self.labels)}")
        return LabeledSpace((lab, self.dim_of(lab)) for lab in order)

    def to_json(self):
        return [[lab, d] for lab, d in self.factors]

    @classmethod
    def from_json(cls, data):
        return cls((lab, d) for lab, d in data)

    def __repr__(self):
        inner = ", ".join(f"{lab}:{d}" for lab, d in self.factors)
        return f"LabeledSpace({inner})"


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    """Dense complex matrix between two labeled spaces (read-only)."""

    row_space: LabeledSpace
    col_space: LabeledSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape != (self.row_space.dim, self.col_space.dim):
            raise ShapeError(
                f"matrix shape {mat.shape} does not match spaces "
                f"({self.row_space.dim}, {self.col_space.dim})"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def on(cls, space: LabeledSpace, matrix) -> "LabeledOperator":
        return cls(space, space, matrix)

    @property
    def space(self) -> LabeledSpace:
        if self.row_space != self.col_space:
            raise ShapeError("operator is not square on a single space")
        return self.row_space

    @property
    def is_square(self) -> bool:
        return self.row_space == self.col_space

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def dag(self) -> "LabeledOperator":
        return LabeledOperator(self.col_space, self.row_space, self.matrix.conj().T)

    def __add__(self, other):
        _check_same(self, other)
        return LabeledOperator(self.row_space, self.col_space, self.matrix + other.matrix)

    def __sub__(self, other):
        _check_same(self, other)
        return LabeledOperator(self.row_space, self.col_space, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return LabeledOperator(self.row_space, self.col_space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if self.col_space != other.row_space:
            raise LabelMismatch("inner spaces differ")
        return LabeledOperator(self.row_space, other.col_space, self.matrix @ other.matrix)

    def allclose(self, other, atol=1e-10) -> bool:
        return (
            self.row_space == other.row_space
            and self.col_space == other.col_space
            and np.allclose(self.matrix, other.matrix, atol=atol, rtol=0)
        )

    def to_json(self):
        return {
            "rows": self.row_space.to_json(),
            "cols": self.col_space.to_json(),
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        mat = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
        return cls(LabeledSpace.from_json(data["rows"]), LabeledSpace.from_json(data["cols"]), mat)


def _check_same(a: LabeledOperator, b: LabeledOperator):
    if a.row_space != b.row_space or a.col_space != b.col_space:
        raise LabelMismatch(f"operators live on different spaces: {a.row_space} vs {b.row_space}")


# -- raw array kernels -------------------------------------------------------


def ptrace_array(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a square matrix, keeping factor positions ``keep``.

    Kept factors retain their original relative order.
    """
    dims = tuple(int(d) for d in dims)
    keep = sorted(set(keep))
    k = len(dims)
    tens = np.asarray(mat).reshape(dims + dims)
    # einsum subscripts: traced factors share row/col letter
    row = list(range(k))
    col = [i + k if i in keep else i for i in range(k)]
    out = [i for i in keep] + [i + k for i in keep]
    res = np.einsum(tens, row + col, out)
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64)) if keep else 1
    return res.reshape(dk, dk)


def permute_array(mat: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square matrix; new factor ``j`` is old ``perm[j]``."""
    dims = tuple(int(d) for d in dims)
    k = len(dims)
    tens = np.asarray(mat).reshape(dims + dims)
    axes = list(perm) + [p + k for p in perm]
    d = int(np.prod(dims, dtype=np.int64)) if dims else 1
    return tens.transpose(axes).reshape(d, d)


def embed_identity(mat: np.ndarray, space: LabeledSpace, sub_labels: Sequence[str],
                   normalized: bool = False) -> np.ndarray:
    """Return ``mat ⊗ I`` on ``space`` where ``mat`` acts on ``space.sub(sub_labels)``.

    With ``normalized`` the identity is divided by its dimension.
    """
    sub = space.sub(sub_labels)
    rest = space.without(sub.labels)
    big = np.kron(np.asarray(mat), np.eye(rest.dim) / (rest.dim if normalized else 1))
    order = list(sub.labels) + list(rest.labels)
    dims = [space.dim_of(lab) for lab in order]
    perm = [order.index(lab) for lab in space.labels]
    return permute_array(big, dims, perm)


# -- labeled operations -------------------------------------------------------


def kron_compose(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Tensor product with ``a``'s factors first."""
    for sa, sb in ((a.row_space, b.row_space), (a.col_space, b.col_space)):
        clash = set(sa.labels) & set(sb.labels)
        if clash:
            raise LabelCollision(f"labels {sorted(clash)} appear on both sides")
    return LabeledOperator(a.row_space + b.row_space, a.col_space + b.col_space,
                           np.kron(a.matrix, b.matrix))


def partial_trace(op: LabeledOperator, traced_labels: Iterable[str]) -> LabeledOperator:
    space = op.space
    traced = set(traced_labels)
    missing = traced - set(space.labels)
    if missing:
        raise LabelNotFound(f"cannot trace {sorted(missing)}: not in {space.labels}")
    keep = [i for i, lab in enumerate(space.labels) if lab not in traced]
    kept = space.without(traced)
    return LabeledOperator.on(kept, ptrace_array(op.matrix, space.dims, keep))


def permute_factors(op: LabeledOperator, new_order: Sequence[str]) -> LabeledOperator:
    space = op.space
    new_space = space.reordered(new_order)
    perm = [space.index(lab) for lab in new_order]
    return LabeledOperator.on(new_space, permute_array(op.matrix, space.dims, perm))


def transpose_op(op: LabeledOperator) -> LabeledOperator:
    return LabeledOperator(op.col_space, op.row_space, op.matrix.T)


def max_entangled(space: LabeledSpace, copy_suffix: str = "~") -> LabeledOperator:
    """Projector onto ``sum_i |ii> / sqrt(d)`` on ``space ⊗ copy``.

    The copy carries the labels of ``space`` with ``copy_suffix`` appended.
    Multi-factor spaces give the product of per-factor states, reordered so
    that all original factors come first.
    """
    if len(space) == 0:
        raise ShapeError("maximally entangled state needs at least one factor")
    d = space.dim
    vec = np.eye(d).reshape(-1) / np.sqrt(d)
    copy = LabeledSpace((lab + copy_suffix, dim) for lab, dim in space.factors)
    return LabeledOperator.on(space + copy, np.outer(vec, vec.conj()))


def _as_matrix(op) -> np.ndarray:
    mat = op.matrix if isinstance(op, LabeledOperator) else np.asarray(op)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def is_hermitian(op, tol: float = DEFAULT_TOL.tol_herm) -> bool:
    mat = _as_matrix(op)
    return bool(np.max(np.abs(mat - mat.conj().T), initial=0.0) <= tol)


def min_eigenvalue(op) -> float:
    mat = _as_matrix(op)
    if mat.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh((mat + mat.conj().T) / 2)[0])


def is_psd(op, tol: float = DEFAULT_TOL.tol_psd) -> bool:
    return min_eigenvalue(op) >= -tol
