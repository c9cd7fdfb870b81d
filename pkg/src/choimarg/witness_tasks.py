"""Channel-form witnesses and state-discrimination tasks with a compatibility gap.

A Choi-level witness ``H`` on ``X ⊗ X'`` is split as ``H = sum_j E_j ⊗ ρ_j^T``
over a fixed informationally complete set of input states.  Because
``tr[(E ⊗ ρ^T) L^J] = tr[E L(ρ)] / d'``, the witness becomes a statement about
channel outputs on a finite set of inputs, and from there a strictly positive
ensemble discrimination task that incompatible channels win more often than
any compatible family.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import QuantumChannel, apply
from .cmp_sdp import (RobustnessReport, _as_local_matrix, _max_linear_over_compatible,
                      robustness, witness_max_over_compatible)
from .conic import SolverOptions
from .errors import DecompositionFailure, LabelMismatch, NoAdvantagePossible, ValidationError
from .marginals import MarginalScenario
from .tensor_core import LabeledOperator, LabeledSpace

__all__ = [
    "ProductDecomposition",
    "ChannelFormWitness",
    "DiscriminationTask",
    "ic_states",
    "product_decompose",
    "channel_form_witness",
    "build_discrimination_task",
    "success_probability",
    "compatible_success_max",
    "ADVANTAGE_THRESHOLD",
    "DELTA_POS",
    "term_count_bound",
]

# robustness below 1 - ADVANTAGE_THRESHOLD is treated as incompatible
ADVANTAGE_THRESHOLD = 1e-4
# strict-positivity offset used for the POVM construction
DELTA_POS = 1e-3
_RECON_TOL = 1e-8


def _cmat_json(mat):
    mat = np.asarray(mat, dtype=complex)
    return {"re": mat.real.tolist(), "im": mat.imag.tolist()}


def _cmat_from_json(data):
    re = np.asarray(data["re"], dtype=float)
    return re + 1j * np.asarray(data.get("im", np.zeros_like(re)), dtype=float)


def ic_states(d: int) -> list:
    """``d²`` pure states spanning the Hermitian operators on ``C^d``.

    Computational projectors, then ``(|k> + |l>)/√2`` and ``(|k> + i|l>)/√2``
    for every ``k < l``.
    """
    states = []
    for k in range(d):
        v = np.zeros(d, dtype=complex)
        v[k] = 1
        states.append(np.outer(v, v.conj()))
    for k in range(d):
        for l in range(k + 1, d):
            for phase in (1, 1j):
                v = np.zeros(d, dtype=complex)
                v[k], v[l] = 1, phase
                v /= np.sqrt(2)
                states.append(np.outer(v, v.conj()))
    return states


@dataclass
class ProductDecomposition:
    """``H = sum_j E_j ⊗ ρ_j^T`` with Hermitian ``E_j`` on the output and states ``ρ_j``."""

    d_out: int
    d_in: int
    operators: list
    states: list
    residual: float

    def __len__(self):
        return len(self.operators)

    def reconstruct(self) -> np.ndarray:
        return sum(np.kron(e, r.T) for e, r in zip(self.operators, self.states))


def product_decompose(h, d_out: int | None = None, d_in: int | None = None) -> ProductDecomposition:
    """Decompose a Hermitian operator on ``X ⊗ X'`` (``X`` first) into product terms.

    For a LabeledOperator without explicit dimensions the last factor is
    taken as ``X'``.
    """
    if isinstance(h, LabeledOperator):
        if d_in is None:
            d_in = h.space.dims[-1]
        h = h.matrix
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    if h.ndim != 2 or h.shape != (n, n):
        raise ValidationError(f"expected a square matrix, got shape {h.shape}")
    if d_in is None and d_out is None:
        raise ValidationError("dimensions of X and X' are required")
    if d_in is None:
        d_in = n // d_out
    if d_out is None:
        d_out = n // d_in
    if d_out * d_in != n:
        raise ValidationError(f"dimensions {d_out} x {d_in} do not match size {n}")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-9 * (1 + np.max(np.abs(h))):
        raise ValidationError("operator is not Hermitian")
    states = ic_states(d_in)
    # R[j, (k, l)] = ρ_j^T[k, l]
    r = np.array([s.T.reshape(-1) for s in states])
    if np.linalg.cond(r) > 1e12:
        raise DecompositionFailure("input state basis is singular")
    # Hm[(a, b), (k, l)] = H[(a, k), (b, l)]
    hm = h.reshape(d_out, d_in, d_out, d_in).transpose(0, 2, 1, 3).reshape(d_out * d_out, d_in * d_in)
    coeffs = np.linalg.solve(r.T, hm.T).T
    ops = []
    for j in range(len(states)):
        e = coeffs[:, j].reshape(d_out, d_out)
        ops.append((e + e.conj().T) / 2)
    dec = ProductDecomposition(d_out, d_in, ops, states, 0.0)
    dec.residual = float(np.max(np.abs(dec.reconstruct() - h), initial=0.0))
    if dec.residual > _RECON_TOL * (1 + np.max(np.abs(h))):
        raise DecompositionFailure(f"reconstruction residual {dec.residual:.2e}")
    return dec


@dataclass
class ChannelFormWitness:
    """Per pair, operators ``H_i`` on ``X`` and input states ``ρ_i`` on ``X'``.

    ``lhs = sum tr[H_i E(ρ_i)]`` on the scenario's channels and ``rhs`` is
    the maximum of the same expression over compatible families.
    """

    operators: list  # per pair: list of N arrays on X
    states: list  # per pair: list of N arrays on X'
    lhs: float
    rhs: float
    robustness: float
    null: bool = False

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def n_terms(self) -> int:
        return len(self.operators[0]) if self.operators else 0

    def choi_operators(self) -> list:
        """The equivalent Choi-pairing operators ``d' sum_i H_i ⊗ ρ_i^T``."""
        return [_pairing_operator(ops, sts) for ops, sts in zip(self.operators, self.states)]

    def evaluate(self, channels) -> float:
        return float(sum(
            np.real(np.trace(h @ apply(ch, s).matrix))
            for ch, ops, sts in zip(channels, self.operators, self.states)
            for h, s in zip(ops, sts)
        ))

    def to_json(self):
        return {
            "null": self.null,
            "robustness": self.robustness,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "terms": [
                [{"H": _cmat_json(h), "rho": _cmat_json(s)} for h, s in zip(ops, sts)]
                for ops, sts in zip(self.operators, self.states)
            ],
        }


def _pairing_operator(ops, states) -> np.ndarray:
    """Choi operator ``W`` with ``tr(W L^J) = sum_i tr[A_i L(σ_i)]``."""
    d_in = states[0].shape[0]
    return d_in * sum(np.kron(a, s.T) for a, s in zip(ops, states))


def term_count_bound(scenario: MarginalScenario) -> int:
    """Common padded length ``(max d)² + 3`` over all pairs."""
    d = max(max(ch.d_out, ch.d_in) for ch in scenario.channels)
    return d * d + 3


def channel_form_witness(scenario: MarginalScenario, report: RobustnessReport | None = None,
                         opts: SolverOptions | None = None) -> ChannelFormWitness:
    """Witness in terms of channel outputs on finitely many input states.

    Returns a null witness (all operators zero, ``lhs = rhs = 0``) when the
    scenario is compatible up to ``ADVANTAGE_THRESHOLD``.
    """
    if report is None:
        report = robustness(scenario, opts)
    n_terms = term_count_bound(scenario)
    null = report.R >= 1 - ADVANTAGE_THRESHOLD
    ops_all, states_all = [], []
    for ch, w in zip(scenario.channels, report.dual_witness):
        mat = _as_local_matrix(w, ch)
        if null:
            mat = np.zeros_like(mat)
        dec = product_decompose(mat, ch.d_out, ch.d_in)
        ops = [e / ch.d_in for e in dec.operators]
        sts = list(dec.states)
        # zero operators make the term count the same for every pair
        while len(ops) < n_terms:
            ops.append(np.zeros((ch.d_out, ch.d_out), dtype=complex))
            sts.append(np.eye(ch.d_in, dtype=complex) / ch.d_in)
        ops_all.append(ops)
        states_all.append(sts)
    wit = ChannelFormWitness(ops_all, states_all, 0.0, 0.0, report.R, null)
    if null:
        return wit
    wit.lhs = wit.evaluate(scenario.channels)
    wit.rhs = witness_max_over_compatible(scenario, wit.choi_operators(), opts=opts)
    return wit


@dataclass
class DiscriminationTask:
    """Ensemble discrimination task ``({p}, {q_i, σ_i}, {M_i})`` for every pair.

    Pair ``k`` sends ``σ_i`` with probability ``q_i`` through the channel
    on that pair and measures the output with the POVM ``{M_i}``.
    """

    in_spaces: list
    out_spaces: list
    pair_probs: np.ndarray
    weights: list  # per pair: array of q_i
    states: list  # per pair: list of arrays on X'
    povms: list  # per pair: list of arrays on X
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pair_probs = np.asarray(self.pair_probs, dtype=float)
        self.weights = [np.asarray(q, dtype=float) for q in self.weights]
        n = len(self.pair_probs)
        if not (len(self.weights) == len(self.states) == len(self.povms) == len(self.in_spaces)
                == len(self.out_spaces) == n):
            raise ValidationError("one ensemble and POVM per pair are required")
        if np.any(self.pair_probs < 0) or abs(self.pair_probs.sum() - 1) > 1e-9:
            raise ValidationError("pair probabilities must form a distribution")
        for k in range(n):
            q, sts, povm = self.weights[k], self.states[k], self.povms[k]
            if not len(q) == len(sts) == len(povm):
                raise ValidationError(f"pair {k}: ensemble and POVM lengths differ")
            if np.any(q < 0) or abs(q.sum() - 1) > 1e-9:
                raise ValidationError(f"pair {k}: ensemble weights must form a distribution")
            d_in, d_out = self.in_spaces[k].dim, self.out_spaces[k].dim
            for s in sts:
                s = np.asarray(s)
                if s.shape != (d_in, d_in):
                    raise ValidationError(f"pair {k}: state shape {s.shape}")
                if np.linalg.eigvalsh((s + s.conj().T) / 2)[0] < -1e-9 or abs(np.trace(s) - 1) > 1e-9:
                    raise ValidationError(f"pair {k}: ensemble member is not a state")
            total = np.zeros((d_out, d_out), dtype=complex)
            for m in povm:
                m = np.asarray(m)
                if m.shape != (d_out, d_out):
                    raise ValidationError(f"pair {k}: POVM element shape {m.shape}")
                if np.linalg.eigvalsh((m + m.conj().T) / 2)[0] < -1e-9:
                    raise ValidationError(f"pair {k}: POVM element is not positive")
                total = total + m
            if np.max(np.abs(total - np.eye(d_out))) > 1e-9:
                raise ValidationError(f"pair {k}: POVM does not sum to the identity")

    @property
    def min_povm_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(m)[0] for povm in self.povms for m in povm))

    @property
    def strictly_positive(self) -> bool:
        return (bool(np.all(self.pair_probs > 0))
                and all(np.all(q > 0) for q in self.weights)
                and self.min_povm_eigenvalue > 0)

    def pairing_operators(self) -> list:
        """``p_k sum_i q_i d' M_i ⊗ σ_i^T`` for every pair."""
        return [p * _pairing_operator([qi * m for qi, m in zip(q, povm)], sts)
                for p, q, sts, povm in zip(self.pair_probs, self.weights, self.states, self.povms)]

    def to_json(self):
        return {
            "pairs": [
                {
                    "in": self.in_spaces[k].to_json(),
                    "out": self.out_spaces[k].to_json(),
                    "p": float(self.pair_probs[k]),
                    "q": self.weights[k].tolist(),
                    "states": [_cmat_json(s) for s in self.states[k]],
                    "povm": [_cmat_json(m) for m in self.povms[k]],
                }
                for k in range(len(self.pair_probs))
            ],
            "info": self.info,
        }

    @classmethod
    def from_json(cls, data) -> "DiscriminationTask":
        try:
            pairs = data["pairs"]
            return cls(
                [LabeledSpace.from_json(p["in"]) for p in pairs],
                [LabeledSpace.from_json(p["out"]) for p in pairs],
                [p["p"] for p in pairs],
                [p["q"] for p in pairs],
                [[_cmat_from_json(s) for s in p["states"]] for p in pairs],
                [[_cmat_from_json(m) for m in p["povm"]] for p in pairs],
                dict(data.get("info", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed task JSON: {exc}") from exc


def _check_shape(task: DiscriminationTask, channels):
    if len(channels) != len(task.pair_probs):
        raise LabelMismatch(f"task has {len(task.pair_probs)} pairs, got {len(channels)} channels")
    for k, ch in enumerate(channels):
        if ch.in_space.dims != task.in_spaces[k].dims or ch.out_space.dims != task.out_spaces[k].dims:
            raise LabelMismatch(f"pair {k}: channel {ch.in_space} -> {ch.out_space} does not fit the task")


def success_probability(task: DiscriminationTask, channels) -> float:
    """``P(D, E) = sum_k p_k sum_i q_i tr[M_i E_k(σ_i)]``."""
    if isinstance(channels, MarginalScenario):
        channels = channels.channels
    _check_shape(task, channels)
    total = 0.0
    for p, q, sts, povm, ch in zip(task.pair_probs, task.weights, task.states, task.povms, channels):
        for qi, s, m in zip(q, sts, povm):
            total += p * qi * float(np.real(np.trace(m @ apply(ch, s).matrix)))
    return total


def compatible_success_max(task: DiscriminationTask, scenario: MarginalScenario,
                           opts: SolverOptions | None = None) -> float:
    """Best success probability over compatible families on the scenario's pairs."""
    _check_shape(task, scenario.channels)
    return witness_max_over_compatible(scenario, task.pairing_operators(), opts=opts)


def build_discrimination_task(scenario: MarginalScenario, witness: ChannelFormWitness | None = None,
                              eps: float | None = None,
                              opts: SolverOptions | None = None) -> DiscriminationTask:
    """Strictly positive task on which the scenario's channels beat every compatible family.

    ``Z_i = κ(H_i + Δ_i I)`` with ``Δ_i = -λ_min(H_i) + DELTA_POS`` and
    ``κ = (1 - DELTA_POS) / max_k ||sum_i (H_i + Δ_i I)||`` form the first N
    POVM elements and ``I - sum_i Z_i`` the last.  The ensemble sends
    ``ρ_i`` with weight ``(1 - ε)/N`` and ``I/d'`` with weight ``ε``.
    """
    if witness is None:
        witness = channel_form_witness(scenario, opts=opts)
    if witness.null or not witness.margin > 0:
        raise NoAdvantagePossible(
            f"no witness with positive margin (robustness {witness.robustness:.6g}, margin {witness.margin:.3g})")
    n_pairs = len(scenario.channels)
    n = witness.n_terms
    shifted = []
    for ops in witness.operators:
        shifted.append([h + (DELTA_POS - np.linalg.eigvalsh(h)[0]) * np.eye(h.shape[0]) for h in ops])
    kappa = (1 - DELTA_POS) / max(np.linalg.norm(sum(ops), 2) for ops in shifted)
    zs = [[kappa * h for h in ops] for ops in shifted]

    p = 1.0 / n_pairs
    # Δ: gap of the rescaled witness part, exact by trace preservation
    delta = kappa * witness.margin / (n * n_pairs)
    gamma_ops, gamma_at_e = [], 0.0
    for ch, z, sts in zip(scenario.channels, zs, witness.states):
        eta = np.eye(ch.d_in, dtype=complex) / ch.d_in
        rest = np.eye(ch.d_out) - sum(z)
        ops = [rest] + [-zi / n for zi in z]
        states = [eta] + list(sts)
        gamma_ops.append(p * _pairing_operator(ops, states))
        gamma_at_e += p * sum(float(np.real(np.trace(a @ apply(ch, s).matrix))) for a, s in zip(ops, states))
    gamma_max = _max_linear_over_compatible(scenario, gamma_ops, opts)
    delta_prime = gamma_max - gamma_at_e
    if eps is None:
        eps = 0.5 if delta_prime <= 0 else min(delta / delta_prime, 1.0) / 2
    if not 0 < eps < 1:
        raise ValidationError("eps must lie strictly between 0 and 1")

    weights, states, povms = [], [], []
    for ch, z, sts in zip(scenario.channels, zs, witness.states):
        weights.append(np.array([(1 - eps) / n] * n + [eps]))
        states.append(list(sts) + [np.eye(ch.d_in, dtype=complex) / ch.d_in])
        povms.append(list(z) + [np.eye(ch.d_out) - sum(z)])
    info = {"kappa": float(kappa), "delta": float(delta), "delta_prime": float(delta_prime), "eps": float(eps),
            "n_terms": n, "witness_margin": float(witness.margin)}
    return DiscriminationTask([ch.in_space for ch in scenario.channels],
                              [ch.out_space for ch in scenario.channels],
                              np.full(n_pairs, p), weights, states, povms, info)
