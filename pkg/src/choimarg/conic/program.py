"""Semidefinite programs in SDPA-style standard form.

Primal:  maximize <C, X>  subject to  <A_i, X> = b_i,  X ⪰ 0
Dual:    minimize b^T y   subject to  sum_i y_i A_i - C = Z ⪰ 0

``X`` is block diagonal.  A block is either a Hermitian PSD matrix
(``kind="herm"``, complex), a real symmetric PSD matrix (``kind="sym"``) or a
nonnegative vector (``kind="lp"``).  The pairing is ``<A, X> = Re tr(A X)``.

Coefficients are stored per block as a sparse matrix whose row ``0`` is the
objective and row ``i`` (1-based) is constraint ``i``; for matrix blocks the
columns index the full ``n x n`` matrix in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError, ValidationError

__all__ = ["Block", "ConicProgram", "ProgramBuilder", "ConicSolution", "Status"]

KINDS = ("herm", "sym", "lp")


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    kind: str = "herm"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValidationError("block size must be positive")

    @property
    def is_matrix(self) -> bool:
        return self.kind != "lp"

    @property
    def width(self) -> int:
        return self.size * self.size if self.is_matrix else self.size

    @property
    def dtype(self):
        return complex if self.kind == "herm" else float

    @property
    def real_dim(self) -> int:
        n = self.size
        return {"herm": n * n, "sym": n * (n + 1) // 2, "lp": n}[self.kind]


@dataclass(eq=False)
class ConicProgram:
    blocks: list
    coef: list  # one csr matrix (m + 1, width) per block
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if len(self.coef) != len(self.blocks):
            raise ShapeError("one coefficient matrix per block is required")
        for blk, mat in zip(self.blocks, self.coef):
            if mat.shape != (self.m + 1, blk.width):
                raise ShapeError(f"block {blk.name!r}: coefficient shape {mat.shape}")
        for blk, mat in zip(self.blocks, self.coef):
            if blk.is_matrix and mat.nnz:
                n = blk.size
                idx = np.arange(n * n)
                swap = (idx % n) * n + idx // n
                mirrored = mat[:, swap].conj()
                diff = (mat - mirrored).tocoo()
                if diff.nnz and np.max(np.abs(diff.data)) > 1e-12 * (1 + np.max(np.abs(mat.data))):
                    raise ValidationError(f"block {blk.name!r} has a non-Hermitian coefficient")

    @property
    def m(self) -> int:
        return self.b.shape[0]

    def block_index(self, name: str) -> int:
        for k, blk in enumerate(self.blocks):
            if blk.name == name:
                return k
        raise KeyError(name)

    def coefficient(self, block: int, row: int) -> np.ndarray:
        """Dense coefficient of ``row`` (0 = objective) on ``block``."""
        blk = self.blocks[block]
        vec = self.coef[block][row].toarray().ravel()
        return vec.reshape(blk.size, blk.size) if blk.is_matrix else vec

    def objective_value(self, x_blocks) -> float:
        return float(sum(_pair(self.coef[k][0], blk, x)[0]
                         for k, (blk, x) in enumerate(zip(self.blocks, x_blocks))))

    def constraint_values(self, x_blocks) -> np.ndarray:
        tot = np.zeros(self.m)
        for k, (blk, x) in enumerate(zip(self.blocks, x_blocks)):
            tot += _pair(self.coef[k][1:], blk, x)
        return tot

    def permuted(self, order: Sequence[int]) -> "ConicProgram":
        """Same program with constraints reordered (``order`` is a permutation of 0..m-1)."""
        rows = np.concatenate([[0], np.asarray(order) + 1])
        return ConicProgram(list(self.blocks), [c[rows] for c in self.coef], self.b[list(order)])

    def equals(self, other: "ConicProgram", atol: float = 0.0) -> bool:
        if [(b.size, b.kind) for b in self.blocks] != [(b.size, b.kind) for b in other.blocks]:
            return False
        if self.b.shape != other.b.shape or np.max(np.abs(self.b - other.b), initial=0) > atol:
            return False
        for a, c in zip(self.coef, other.coef):
            diff = (a - c).tocoo()
            if diff.nnz and np.max(np.abs(diff.data)) > atol:
                return False
        return True


def _pair(rows: sp.csr_matrix, blk: Block, x: np.ndarray) -> np.ndarray:
    """``Re tr(A_i X)`` for every row of ``rows``."""
    if blk.is_matrix:
        # tr(A X) = sum A[p, q] X[q, p] and X is Hermitian
        return np.real(rows @ np.conj(np.asarray(x).ravel()))
    return np.real(rows @ np.asarray(x))


class ProgramBuilder:
    """Incremental construction of a ConicProgram."""

    def __init__(self):
        self.blocks: list[Block] = []
        self._rows: list[list] = []  # per block: list of (row_index, csr 1 x width)
        self._obj: dict[int, sp.csr_matrix] = {}
        self._b: list[float] = []

    def add_block(self, name: str, size: int, kind: str = "herm") -> int:
        self.blocks.append(Block(name, size, kind))
        self._rows.append([])
        return len(self.blocks) - 1

    @property
    def m(self) -> int:
        return len(self._b)

    def _as_rows(self, block: int, mat) -> sp.csr_matrix:
        blk = self.blocks[block]
        if sp.issparse(mat):
            mat = sp.csr_matrix(mat, dtype=blk.dtype)
        else:
            arr = np.asarray(mat, dtype=blk.dtype)
            if blk.is_matrix and arr.ndim == 2 and arr.shape == (blk.size, blk.size):
                arr = arr.reshape(1, -1)
            mat = sp.csr_matrix(np.atleast_2d(arr))
        if mat.shape[1] != blk.width:
            raise ShapeError(f"block {blk.name!r} expects width {blk.width}, got {mat.shape[1]}")
        return mat

    def set_objective(self, terms: dict):
        for block, mat in terms.items():
            self._obj[block] = self._as_rows(block, mat)

    def add_constraints(self, terms: dict, rhs) -> range:
        """Add ``k`` constraints at once; ``terms`` maps block -> (k, width) rows."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        start = self.m
        for block, mat in terms.items():
            rows = self._as_rows(block, mat)
            if rows.shape[0] != rhs.shape[0]:
                raise ShapeError("row count does not match right-hand side")
            self._rows[block].append((start, rows))
        self._b.extend(rhs.tolist())
        return range(start, self.m)

    def add_constraint(self, terms: dict, rhs: float) -> int:
        return self.add_constraints(terms, [rhs]).start

    def build(self) -> ConicProgram:
        m = self.m
        coefs = []
        for k, blk in enumerate(self.blocks):
            parts_r, parts_c, parts_v = [], [], []
            pieces = list(self._rows[k])
            if k in self._obj:
                pieces.append((-1, self._obj[k]))
            for start, rows in pieces:
                coo = rows.tocoo()
                parts_r.append(coo.row + start + 1)
                parts_c.append(coo.col)
                parts_v.append(coo.data)
            if parts_r:
                r = np.concatenate(parts_r)
                c = np.concatenate(parts_c)
                v = np.concatenate(parts_v).astype(blk.dtype)
            else:
                r = c = np.zeros(0, dtype=int)
                v = np.zeros(0, dtype=blk.dtype)
            mat = sp.csr_matrix((v, (r, c)), shape=(m + 1, blk.width), dtype=blk.dtype)
            mat.sum_duplicates()
            mat.eliminate_zeros()
            coefs.append(mat)
        return ConicProgram(list(self.blocks), coefs, np.array(self._b))


class Status:
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class ConicSolution:
    status: str
    x: list
    y: np.ndarray
    z: list
    primal_objective: float
    dual_objective: float
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    history: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL
