"""Named constructions and self-checking demonstrations.

Each demo returns ``(ok, results)``; ``ok`` is False when a computed value
misses its expected outcome.
"""
from __future__ import annotations

import numpy as np

from .channels import (QuantumChannel, cloning_isometry, cnot_ancilla_channel, ghz_vector,
                       ghz_marginal_channel, identity_channel, isotropic_w_channel, mix_channels,
                       swap_prepare_channel)
from .classical_cmp import classical_local_compatibility, classical_robustness, pr_box_scenario
from .cmp_sdp import primal_residuals, robustness, verify_witness
from .conic import SolverOptions
from .marginals import MarginalScenario, broadcast_scenario, extendibility_scenario
from .tensor_core import LabeledOperator, LabeledSpace, permute_array

__all__ = [
    "DEMOS",
    "run_demo",
    "mpair_scenario",
    "swap_scenario",
    "ghz_product_scenario",
    "mpair_global_choi",
    "cloned_global_choi",
    "mpair_noise_channel",
]

_QUBITS = lambda labels: LabeledSpace((lab, 2) for lab in labels)


def _basis_state(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits))
    v[int(bits, 2)] = 1.0
    return v


def _ketbra(a: str, b: str) -> np.ndarray:
    return np.outer(_basis_state(a), _basis_state(b))


def mpair_scenario() -> MarginalScenario:
    """``{M_AB, M_CB}`` with the GHZ-type channel ``M_XB``."""
    return MarginalScenario.from_channels([cnot_ancilla_channel("A"), cnot_ancilla_channel("C")])


def swap_scenario() -> MarginalScenario:
    return MarginalScenario.from_channels([swap_prepare_channel("A"), swap_prepare_channel("C")])


def ghz_product_scenario(phi=None) -> MarginalScenario:
    """Two GHZ-type marginal channels sharing B, built from ``|φ>_{XBB'}``.

    The default ``φ = |0>_X ⊗ |Φ+>_{BB'}`` is product across X vs BB'.
    """
    if phi is None:
        phi = np.kron([1.0, 0.0], np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2))
    return MarginalScenario.from_channels([ghz_marginal_channel(phi, "A"), ghz_marginal_channel(phi, "C")])


def mpair_global_choi() -> LabeledOperator:
    """The optimal global Choi operator for the M pair, entered term by term.

    Written as ``I_{A'C'}/4 ⊗ G_{BB'AC}`` and returned in the order
    ``A B C A' B' C'``.
    """
    g = (4 * _ketbra("0000", "0000") + _ketbra("0001", "0001") + _ketbra("0001", "0010")
         + _ketbra("0010", "0001") + _ketbra("0010", "0010")
         + 4 * _ketbra("1111", "1111") + _ketbra("1101", "1101") + _ketbra("1101", "1110")
         + _ketbra("1110", "1101") + _ketbra("1110", "1110")
         + 2 * _ketbra("0000", "1101") + 2 * _ketbra("0000", "1110")
         + 2 * _ketbra("0001", "1111") + 2 * _ketbra("0010", "1111")
         + 2 * _ketbra("1101", "0000") + 2 * _ketbra("1110", "0000")
         + 2 * _ketbra("1111", "0001") + 2 * _ketbra("1111", "0010")) / 12
    full = np.kron(np.eye(4) / 4, g)  # A' C' B B' A C
    src = ["A'", "C'", "B", "B'", "A", "C"]
    dst = ["A", "B", "C", "A'", "B'", "C'"]
    mat = permute_array(full, [2] * 6, [src.index(lab) for lab in dst])
    return LabeledOperator.on(_QUBITS(dst), mat)


def cloned_global_choi() -> LabeledOperator:
    """Choi of ``(C_{AC|X} ⊗ id_B) ∘ CNOT_XB [|0><0|_X ⊗ tr_AC(.)]``.

    Built from the cloning isometry applied to ``|GHZ>_{XBB'}``, in the
    order ``A B C A' B' C'``.
    """
    v = cloning_isometry().reshape(2, 2, 2, 2)  # A C M | X
    ghz = ghz_vector(3).reshape(2, 2, 2)  # X B B'
    psi = np.einsum("acmx,xbd->macbd", v, ghz).reshape(2, 16)
    rho = sum(np.outer(p, p.conj()) for p in psi)  # A C B B'
    full = np.kron(rho, np.eye(4) / 4)  # A C B B' A' C'
    src = ["A", "C", "B", "B'", "A'", "C'"]
    dst = ["A", "B", "C", "A'", "B'", "C'"]
    mat = permute_array(full, [2] * 6, [src.index(lab) for lab in dst])
    return LabeledOperator.on(_QUBITS(dst), mat)


def mpair_noise_channel(x_label: str = "A", b_label: str = "B") -> QuantumChannel:
    """Noise channel that makes ``0.75 M_XB + 0.25 N_XB`` compatible.

    Choi ``I_{X'}/2 ⊗ [(|001><001| + |110><110|)/3 + (|000> - |111>)(<000| - <111|)/6]_{BB'X}``.
    """
    core = ((_ketbra("001", "001") + _ketbra("110", "110")) / 3
            + (_ketbra("000", "000") - _ketbra("000", "111") - _ketbra("111", "000")
               + _ketbra("111", "111")) / 6)
    xp = x_label + "'"
    full = np.kron(np.eye(2) / 2, core)  # X' B B' X
    src = [xp, b_label, b_label + "'", x_label]
    dst = [x_label, b_label, xp, b_label + "'"]
    mat = permute_array(full, [2] * 4, [src.index(lab) for lab in dst])
    return QuantumChannel.from_matrix(_QUBITS([xp, b_label + "'"]), _QUBITS([x_label, b_label]), mat)


def _close(value, target, tol):
    return abs(value - target) <= tol


def demo_mpair(opts: SolverOptions | None = None):
    sc = mpair_scenario()
    rep = robustness(sc, opts)
    res = primal_residuals(sc, mpair_global_choi(), 0.75)
    worst = max([res["psd"], res["normalization"]] + res["no_signaling"] + res["dominance"])
    clone_dev = float(np.max(np.abs(cloned_global_choi().matrix - mpair_global_choi().matrix)))
    noisy = MarginalScenario.from_channels([
        mix_channels([0.75, 0.25], [cnot_ancilla_channel(x), mpair_noise_channel(x)]) for x in ("A", "C")
    ])
    r_noisy = robustness(noisy, opts).R
    ok = _close(rep.R, 0.75, 1e-4) and worst <= 1e-9 and clone_dev <= 1e-12 and _close(r_noisy, 1.0, 1e-4)
    return ok, {"R": rep.R, "expected_R": 0.75, "global_choi_max_residual": worst,
                "cloning_vs_global_choi": clone_dev, "R_with_noise_mixture": r_noisy,
                "primal_dual_gap": rep.primal_dual_gap}


def demo_swap(opts: SolverOptions | None = None):
    sc = swap_scenario()
    rep = robustness(sc, opts)
    cert = verify_witness(sc, rep.dual_witness, opts=opts)
    ok = rep.R < 1 - 1e-3 and cert.margin >= 1e-4
    return ok, {"R": rep.R, "witness_value": cert.value_on_input,
                "witness_compatible_max": cert.compatible_max, "witness_margin": cert.margin,
                "primal_dual_gap": rep.primal_dual_gap}


def demo_ghz_product(opts: SolverOptions | None = None):
    r_product = robustness(ghz_product_scenario(), opts).R
    ok = _close(r_product, 1.0, 1e-4)
    return ok, {"R_product": r_product, "expected": 1.0}


def demo_prbox(opts: SolverOptions | None = None):
    sc = pr_box_scenario()
    local = classical_local_compatibility(sc)
    r = classical_robustness(sc, opts)
    ok = local.compatible and r < 1 - 1e-3
    return ok, {"robustness": r, "pairwise_compatible": local.compatible,
                "verdict": "incompatible" if r < 1 - 1e-3 else "compatible"}


def demo_isotropic(opts: SolverOptions | None = None):
    r = {p: robustness(extendibility_scenario(isotropic_w_channel(p)), opts).R for p in (0.6, 0.75)}
    ok = _close(r[0.6], 1.0, 1e-4) and r[0.75] < 1 - 1e-3
    return ok, {"R_p0.6": r[0.6], "R_p0.75": r[0.75], "threshold": 2 / 3}


def demo_no_broadcast(opts: SolverOptions | None = None):
    sc = broadcast_scenario([identity_channel("X'", "A"), identity_channel("X'", "C")])
    rep = robustness(sc, opts)
    cert = verify_witness(sc, rep.dual_witness, opts=opts)
    ok = rep.R < 1 - 1e-3 and cert.margin > 0
    return ok, {"R": rep.R, "witness_margin": cert.margin, "primal_dual_gap": rep.primal_dual_gap}


DEMOS = {
    "mpair": demo_mpair,
    "swap": demo_swap,
    "ghz-product": demo_ghz_product,
    "prbox": demo_prbox,
    "isotropic": demo_isotropic,
    "no-broadcast": demo_no_broadcast,
}


def run_demo(name: str, opts: SolverOptions | None = None):
    try:
        fn = DEMOS[name]
    except KeyError:
        raise KeyError(f"unknown demo {name!r}; choose from {sorted(DEMOS)}") from None
    return fn(opts)
