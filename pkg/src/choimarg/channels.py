"""Quantum channels stored in Choi form, plus the named constructions.

A channel ``E: X' -> X`` is represented by its Choi state

    J = (E ⊗ id)(|Ψ+><Ψ+|),   |Ψ+> = sum_i |ii> / sqrt(d_in),

a positive operator on ``out_space ⊗ in_space`` with ``tr_out J = I / d_in``.
Input labels conventionally carry a trailing prime (``"A'"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidChannel, LabelMismatch, ShapeError, ValidationError
from .tensor_core import (
    DEFAULT_TOL,
    LabeledOperator,
    LabeledSpace,
    ToleranceConfig,
    min_eigenvalue,
    permute_array,
    ptrace_array,
)

__all__ = [
    "QuantumChannel",
    "StochasticChannel",
    "primed",
    "choi_from_kraus",
    "apply",
    "identity_channel",
    "unitary_channel",
    "prepare_channel",
    "depolarizing_channel",
    "completely_depolarizing",
    "mix_channels",
    "cnot_ancilla_channel",
    "swap_prepare_channel",
    "ghz_vector",
    "ghz_marginal_channel",
    "w_channel",
    "isotropic_state",
    "isotropic_w_channel",
    "cloning_isometry",
    "cloning_channel",
    "qc_channel_from_povm",
    "classical_embedding",
]


def primed(label: str) -> str:
    return label + "'"


def _ket(index: int, dim: int = 2) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def _proj(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """CPTP map ``in_space -> out_space`` held as a Choi operator on ``out ⊗ in``."""

    in_space: LabeledSpace
    out_space: LabeledSpace
    choi: LabeledOperator
    tol: ToleranceConfig = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        clash = set(self.in_space.labels) & set(self.out_space.labels)
        if clash:
            raise InvalidChannel(f"input and output share labels {sorted(clash)}")
        joint = self.out_space + self.in_space
        if not self.choi.is_square or self.choi.row_space != joint:
            raise InvalidChannel(f"Choi operator must live on {joint}, got {self.choi.row_space}")
        mat = self.choi.matrix
        herm = np.max(np.abs(mat - mat.conj().T), initial=0.0)
        if herm > self.tol.tol_herm + self.tol.tol_eq:
            raise InvalidChannel(f"Choi operator is not Hermitian (deviation {herm:.2e})")
        lam = min_eigenvalue(mat)
        if lam < -self.tol.tol_psd:
            raise InvalidChannel(f"Choi operator is not positive (min eigenvalue {lam:.3e})")
        dev = np.max(np.abs(self.input_marginal() - np.eye(self.d_in) / self.d_in), initial=0.0)
        if dev > self.tol.tol_eq:
            raise InvalidChannel(f"channel is not trace preserving (marginal deviation {dev:.3e})")

    @classmethod
    def from_matrix(cls, in_space, out_space, matrix, tol=DEFAULT_TOL) -> "QuantumChannel":
        clash = set(in_space.labels) & set(out_space.labels)
        if clash:
            raise InvalidChannel(f"input and output share labels {sorted(clash)}")
        return cls(in_space, out_space, LabeledOperator.on(out_space + in_space, matrix), tol)

    @property
    def d_in(self) -> int:
        return self.in_space.dim

    @property
    def d_out(self) -> int:
        return self.out_space.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.choi.matrix

    @property
    def space(self) -> LabeledSpace:
        return self.choi.row_space

    def input_marginal(self) -> np.ndarray:
        n_out = len(self.out_space)
        dims = self.out_space.dims + self.in_space.dims
        keep = list(range(n_out, len(dims)))
        return ptrace_array(self.matrix, dims, keep)

    def choi_in_order(self, order: Sequence[str]) -> np.ndarray:
        """Choi matrix with its factors rearranged to ``order``."""
        perm = [self.space.index(lab) for lab in order]
        return permute_array(self.matrix, self.space.dims, perm)

    def relabel(self, mapping: dict) -> "QuantumChannel":
        rn = lambda sp: LabeledSpace((mapping.get(lab, lab), d) for lab, d in sp.factors)
        return QuantumChannel.from_matrix(rn(self.in_space), rn(self.out_space), self.matrix, self.tol)

    def __call__(self, rho):
        return apply(self, rho)

    def to_json(self):
        return {
            "in": self.in_space.to_json(),
            "out": self.out_space.to_json(),
            "choi": {"re": self.matrix.real.tolist(), "im": self.matrix.imag.tolist()},
        }

    @classmethod
    def from_json(cls, data, tol=DEFAULT_TOL) -> "QuantumChannel":
        try:
            in_space = LabeledSpace.from_json(data["in"])
            out_space = LabeledSpace.from_json(data["out"])
            re = np.asarray(data["choi"]["re"], dtype=float)
            im = np.asarray(data["choi"].get("im", np.zeros_like(re)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed channel JSON: {exc}") from exc
        try:
            return cls.from_matrix(in_space, out_space, re + 1j * im, tol)
        except ShapeError as exc:
            raise InvalidChannel(str(exc)) from exc


def choi_from_kraus(kraus_list, in_space: LabeledSpace, out_space: LabeledSpace,
                    tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    kraus = [np.asarray(k, dtype=complex) for k in kraus_list]
    d_in, d_out = in_space.dim, out_space.dim
    for k in kraus:
        if k.shape != (d_out, d_in):
            raise ShapeError(f"Kraus operator shape {k.shape}, expected {(d_out, d_in)}")
    tp = sum(k.conj().T @ k for k in kraus)
    dev = np.max(np.abs(tp - np.eye(d_in)))
    if dev > tol.tol_eq:
        raise InvalidChannel(f"Kraus operators are not trace preserving (deviation {dev:.3e})")
    choi = sum(_proj(k.reshape(-1)) for k in kraus) / d_in
    return QuantumChannel.from_matrix(in_space, out_space, choi, tol)


def apply(ch: QuantumChannel, rho) -> LabeledOperator:
    """Channel action ``E(ρ) = d_in tr_in[(I ⊗ ρ^T) J]``."""
    if isinstance(rho, LabeledOperator):
        if rho.row_space != ch.in_space or not rho.is_square:
            raise LabelMismatch(f"state lives on {rho.row_space}, channel expects {ch.in_space}")
        mat = rho.matrix
    else:
        mat = np.asarray(rho, dtype=complex)
        if mat.shape != (ch.d_in, ch.d_in):
            raise ShapeError(f"state shape {mat.shape}, expected {(ch.d_in, ch.d_in)}")
    d_out, d_in = ch.d_out, ch.d_in
    j4 = ch.matrix.reshape(d_out, d_in, d_out, d_in)
    out = d_in * np.einsum("aibj,ij->ab", j4, mat)
    return LabeledOperator.on(ch.out_space, out)


# -- elementary channels ------------------------------------------------------


def _single(label, d):
    return LabeledSpace([(label, d)])


def identity_channel(in_label: str, out_label: str, d: int = 2) -> QuantumChannel:
    return choi_from_kraus([np.eye(d)], _single(in_label, d), _single(out_label, d))


def unitary_channel(u, in_space: LabeledSpace, out_space: LabeledSpace) -> QuantumChannel:
    return choi_from_kraus([u], in_space, out_space)


def prepare_channel(state, in_space: LabeledSpace, out_space: LabeledSpace) -> QuantumChannel:
    """Discard the input and prepare ``state``."""
    state = np.asarray(state, dtype=complex)
    choi = np.kron(state, np.eye(in_space.dim) / in_space.dim)
    return QuantumChannel.from_matrix(in_space, out_space, choi)


def completely_depolarizing(in_space: LabeledSpace, out_space: LabeledSpace) -> QuantumChannel:
    n = in_space.dim * out_space.dim
    return QuantumChannel.from_matrix(in_space, out_space, np.eye(n) / n)


def mix_channels(weights: Sequence[float], channels: Sequence[QuantumChannel],
                 tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    first = channels[0]
    for ch in channels[1:]:
        if ch.in_space != first.in_space or ch.out_space != first.out_space:
            raise LabelMismatch("cannot mix channels on different spaces")
    mat = sum(w * ch.matrix for w, ch in zip(weights, channels))
    return QuantumChannel.from_matrix(first.in_space, first.out_space, mat, tol)


def depolarizing_channel(p: float, in_label: str, out_label: str, d: int = 2) -> QuantumChannel:
    """``ρ -> p ρ + (1 - p) tr(ρ) I / d``."""
    ident = identity_channel(in_label, out_label, d)
    return mix_channels([p, 1 - p], [ident, completely_depolarizing(ident.in_space, ident.out_space)])


# -- named constructions ------------------------------------------------------


def _cnot_xb() -> np.ndarray:
    """``|i>_X |j>_B -> |i+j mod 2>_X |j>_B`` in the X,B ordering (B controls)."""
    u = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            u[2 * ((i + j) % 2) + j, 2 * i + j] = 1.0
    return u


def _swap2() -> np.ndarray:
    u = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            u[2 * j + i, 2 * i + j] = 1.0
    return u


def _discard_x_then(u: np.ndarray, x_label: str, b_label: str) -> QuantumChannel:
    """Channel ``u [|0><0|_X ⊗ tr_X(.)]`` on qubits X, B."""
    in_space = LabeledSpace([(primed(x_label), 2), (primed(b_label), 2)])
    out_space = LabeledSpace([(x_label, 2), (b_label, 2)])
    kraus = []
    for k in range(2):
        reset = np.kron(np.outer(_ket(0), _ket(k)), np.eye(2))
        kraus.append(u @ reset)
    return choi_from_kraus(kraus, in_space, out_space)


def cnot_ancilla_channel(x_label: str = "A", b_label: str = "B") -> QuantumChannel:
    """``M_XB(.) = CNOT_XB [|0><0|_X ⊗ tr_X(.)]``; its Choi is ``|GHZ><GHZ|_{XBB'} ⊗ I_{X'}/2``."""
    return _discard_x_then(_cnot_xb(), x_label, b_label)


def swap_prepare_channel(x_label: str = "A", b_label: str = "B") -> QuantumChannel:
    """``K_XB(.) = SWAP [|0><0|_X ⊗ tr_X(.)]``: B's input is moved to X and B is reset."""
    return _discard_x_then(_swap2(), x_label, b_label)


def ghz_vector(n: int = 3) -> np.ndarray:
    v = np.zeros(2 ** n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return v


def _xbb_choi_channel(state_xbbp: np.ndarray, dx: int, db: int, x_label: str, b_label: str,
                      tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Channel with Choi ``state_{XBB'} ⊗ I_{X'}/d_X``, reordered to X B X' B'."""
    big = np.kron(state_xbbp, np.eye(dx) / dx)  # order X B B' X'
    choi = permute_array(big, [dx, db, db, dx], [0, 1, 3, 2])
    in_space = LabeledSpace([(primed(x_label), dx), (primed(b_label), db)])
    out_space = LabeledSpace([(x_label, dx), (b_label, db)])
    return QuantumChannel.from_matrix(in_space, out_space, choi, tol)


def ghz_marginal_channel(phi, x_label: str = "A", b_label: str = "B", dims=(2, 2),
                         tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Channel XB -> XB with Choi ``|φ><φ|_{XBB'} ⊗ I_{X'}/d``; ``φ`` is ordered X, B, B'."""
    dx, db = dims
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if phi.size != dx * db * db:
        raise ShapeError(f"state vector has {phi.size} entries, expected {dx * db * db}")
    if abs(np.linalg.norm(phi) - 1) > tol.tol_eq:
        raise InvalidChannel("state vector is not normalized")
    rho = _proj(phi)
    marg = ptrace_array(rho, [dx, db, db], [2])
    if np.max(np.abs(marg - np.eye(db) / db)) > tol.tol_eq:
        raise InvalidChannel("tr_XB |φ><φ| must be maximally mixed on B'")
    return _xbb_choi_channel(rho, dx, db, x_label, b_label, tol)


def w_channel(omega, sigma, x_label: str = "A", b_label: str = "B",
              tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Channel with Choi ``σ_B ⊗ ω_{XB'} ⊗ I_{X'}/d``; ``ω`` is ordered X, B'."""
    omega = np.asarray(omega, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    db = sigma.shape[0]
    dx = omega.shape[0] // db
    if omega.shape != (dx * db, dx * db):
        raise ShapeError("ω must be a square matrix on X ⊗ B'")
    marg = ptrace_array(omega, [dx, db], [1])
    if np.max(np.abs(marg - np.eye(db) / db)) > tol.tol_eq:
        raise InvalidChannel("tr_X ω must be maximally mixed on B'")
    if min_eigenvalue(sigma) < -tol.tol_psd or abs(np.trace(sigma) - 1) > tol.tol_trace:
        raise InvalidChannel("σ is not a state")
    state = np.kron(sigma, omega)  # B X B'
    state = permute_array(state, [db, dx, db], [1, 0, 2])
    return _xbb_choi_channel(state, dx, db, x_label, b_label, tol)


def isotropic_state(p: float, d: int = 2) -> np.ndarray:
    """``p |Ψ+><Ψ+| + (1 - p) I / d^2``."""
    psi = np.eye(d).reshape(-1) / np.sqrt(d)
    return p * _proj(psi) + (1 - p) * np.eye(d * d) / d ** 2


def isotropic_w_channel(p: float, x_label: str = "A", b_label: str = "B") -> QuantumChannel:
    """``p K_XB + (1 - p) (I/2 ⊗ |0><0|) tr(.)``, a W-channel with isotropic ω."""
    return w_channel(isotropic_state(p), _proj(_ket(0)), x_label, b_label)


def cloning_isometry() -> np.ndarray:
    """Optimal symmetric qubit cloner X -> A C M (8 x 2), factor order A, C, M."""
    psi_plus = (np.kron(_ket(1), _ket(0)) + np.kron(_ket(0), _ket(1))) / np.sqrt(2)
    k = lambda *bits: np.kron(np.kron(_ket(bits[0]), _ket(bits[1])), _ket(bits[2]))
    v0 = np.sqrt(2 / 3) * k(0, 0, 1) - np.sqrt(1 / 3) * np.kron(psi_plus, _ket(0))
    v1 = -np.sqrt(2 / 3) * k(1, 1, 0) + np.sqrt(1 / 3) * np.kron(psi_plus, _ket(1))
    return np.stack([v0, v1], axis=1)


def cloning_channel(in_label: str = "X", out_labels=("A", "C")) -> QuantumChannel:
    """Universal 1 -> 2 cloner with the machine register traced out."""
    v = cloning_isometry().reshape(2, 2, 2, 2)  # A C M | X
    kraus = [v[:, :, m, :].reshape(4, 2) for m in range(2)]
    out_space = LabeledSpace([(out_labels[0], 2), (out_labels[1], 2)])
    return choi_from_kraus(kraus, _single(in_label, 2), out_space)


def qc_channel_from_povm(povm, in_label: str = "A'", out_label: str = "A",
                         tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Measure-and-prepare ``ρ -> sum_i tr(M_i ρ) |i><i|``."""
    povm = [np.asarray(m, dtype=complex) for m in povm]
    d = povm[0].shape[0]
    for m in povm:
        if m.shape != (d, d):
            raise InvalidChannel("POVM elements must share one square shape")
        if np.max(np.abs(m - m.conj().T)) > tol.tol_herm or min_eigenvalue(m) < -tol.tol_psd:
            raise InvalidChannel("POVM element is not positive semidefinite")
    if np.max(np.abs(sum(povm) - np.eye(d))) > tol.tol_eq:
        raise InvalidChannel("POVM elements do not sum to the identity")
    n = len(povm)
    choi = sum(np.kron(_proj(_ket(i, n)), m.T) for i, m in enumerate(povm)) / d
    return QuantumChannel.from_matrix(_single(in_label, d), _single(out_label, n), choi, tol)


# -- classical channels -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StochasticChannel:
    """Conditional distribution ``P(out | in)`` stored as ``matrix[out, in]``.

    Alphabets are labeled like quantum factors; multi-party indices follow the
    same most-significant-first ordering.
    """

    in_space: LabeledSpace
    out_space: LabeledSpace
    matrix: np.ndarray = field(repr=False)
    tol: ToleranceConfig = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.shape != (self.out_space.dim, self.in_space.dim):
            raise ShapeError(f"matrix shape {mat.shape}, expected {(self.out_space.dim, self.in_space.dim)}")
        if mat.min(initial=0.0) < -self.tol.tol_eq or mat.max(initial=0.0) > 1 + self.tol.tol_eq:
            raise InvalidChannel("probabilities must lie in [0, 1]")
        if np.max(np.abs(mat.sum(axis=0) - 1), initial=0.0) > self.tol.tol_eq:
            raise InvalidChannel("columns must sum to one")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def tensor(self) -> np.ndarray:
        """Probability tensor indexed ``[out_1, ..., out_k, in_1, ..., in_l]``."""
        return self.matrix.reshape(self.out_space.dims + self.in_space.dims)

    def to_json(self):
        return {"in": self.in_space.to_json(), "out": self.out_space.to_json(),
                "matrix": self.matrix.tolist()}

    @classmethod
    def from_json(cls, data, tol=DEFAULT_TOL):
        try:
            return cls(LabeledSpace.from_json(data["in"]), LabeledSpace.from_json(data["out"]),
                       np.asarray(data["matrix"], dtype=float), tol)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed stochastic channel JSON: {exc}") from exc


def classical_embedding(ch: StochasticChannel, in_labels=None, out_labels=None) -> QuantumChannel:
    """Quantum channel ``ρ -> sum P(s|s') <s'|ρ|s'> |s><s|`` (dephase, then act classically)."""
    d_in, d_out = ch.in_space.dim, ch.out_space.dim
    diag = np.zeros(d_out * d_in)
    for s in range(d_out):
        for sp in range(d_in):
            diag[s * d_in + sp] = ch.matrix[s, sp] / d_in
    rn = lambda sp, new: sp if new is None else LabeledSpace(zip(new, sp.dims))
    return QuantumChannel.from_matrix(rn(ch.in_space, in_labels), rn(ch.out_space, out_labels),
                                      np.diag(diag))
