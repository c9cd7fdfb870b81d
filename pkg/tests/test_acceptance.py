"""Acceptance suite: one recorded PASS/FAIL line per criterion, printed in the terminal summary."""
import numpy as np
import pytest

from choimarg.channels import (QuantumChannel, choi_from_kraus, cnot_ancilla_channel, ghz_marginal_channel,
                               ghz_vector, identity_channel, isotropic_w_channel, mix_channels)
from choimarg.classical_cmp import (ClassicalScenario, classical_local_compatibility, classical_marginal,
                                    classical_robustness, compose_chain, pr_box_scenario)
from choimarg.cmp_sdp import build_dual, primal_residuals, robustness, verify_witness
from choimarg.conic import solve
from choimarg.demos import ghz_product_scenario, mpair_global_choi, mpair_noise_channel
from choimarg.errors import NoAdvantagePossible, NotWellDefined
from choimarg.marginals import (MarginalScenario, broadcast_scenario, extendibility_scenario, is_no_signaling,
                                marginal_channel, signaling_residual)
from choimarg.tensor_core import LabeledOperator, LabeledSpace, partial_trace, permute_factors
from choimarg.witness_tasks import (build_discrimination_task, channel_form_witness, compatible_success_max,
                                    success_probability)

from conftest import (TIMINGS, qubits, random_chain, random_channel, random_kraus, random_state,
                      random_two_party_scenario, record, semicausal_kraus)

pytestmark = pytest.mark.slow


def _mixture_scenario():
    return MarginalScenario.from_channels([
        mix_channels([0.75, 0.25], [cnot_ancilla_channel(x), mpair_noise_channel(x)]) for x in ("A", "C")
    ])


def _ghz_scenario():
    ghz = ghz_vector(3)
    return MarginalScenario.from_channels([ghz_marginal_channel(ghz, "A"), ghz_marginal_channel(ghz, "C")])


def _random_product_scenario():
    rng = np.random.default_rng(99)
    return MarginalScenario.from_channels([random_channel(rng, qubits("A'"), qubits("A")),
                                           random_channel(rng, qubits("B'"), qubits("B"))])


class _Cache:
    """Scenarios, primal reports and dual optima shared across criteria."""

    def __init__(self, mpair, mpair_report, swap, swap_report):
        self.scenarios = {
            "mpair": mpair,
            "swap": swap,
            "noise-mixture": _mixture_scenario(),
            "ghz-product": ghz_product_scenario(),
            "ghz": _ghz_scenario(),
            "isotropic-0.6": extendibility_scenario(isotropic_w_channel(0.6)),
            "isotropic-0.75": extendibility_scenario(isotropic_w_channel(0.75)),
            "no-broadcast": broadcast_scenario([identity_channel("X'", "A"), identity_channel("X'", "C")]),
        }
        self.reports = {"mpair": mpair_report, "swap": swap_report}
        self.duals = {}

    def report(self, name):
        if name not in self.reports:
            self.reports[name] = robustness(self.scenarios[name])
        return self.reports[name]

    def dual(self, name):
        if name not in self.duals:
            self.duals[name] = solve(build_dual(self.scenarios[name])).dual_objective
        return self.duals[name]


@pytest.fixture(scope="module")
def cache(mpair, mpair_report, swap, swap_report):
    return _Cache(mpair, mpair_report, swap, swap_report)


def test_criterion_01_mpair_robustness(cache):
    rep = cache.report("mpair")
    elapsed = TIMINGS.get("mpair", float("nan"))
    ok = abs(rep.R - 0.75) <= 1e-4 and cache.scenarios["mpair"].global_space.dim == 64 and elapsed < 60
    record(1, "M-pair robustness = 0.75", ok, f"R = {rep.R:.8f}, solve time {elapsed:.1f} s")
    assert ok


def test_criterion_02_explicit_global_choi(cache):
    res = primal_residuals(cache.scenarios["mpair"], mpair_global_choi(), 0.75)
    worst = max([res["psd"], res["normalization"]] + res["no_signaling"] + res["dominance"])
    ok = worst <= 1e-9
    record(2, "explicit optimal global Choi is feasible at 0.75", ok, f"max residual {worst:.2e}")
    assert ok


def test_criterion_03_noise_mixture_is_compatible(cache):
    r = cache.report("noise-mixture").R
    ok = abs(r - 1) <= 1e-4
    record(3, "0.75 M + 0.25 N is compatible", ok, f"R = {r:.8f}")
    assert ok


def test_criterion_04_swap_pair(cache):
    sc = cache.scenarios["swap"]
    rep = cache.report("swap")
    cert = verify_witness(sc, rep.dual_witness)
    dual_gap = abs(rep.solution.primal_objective - cache.dual("swap"))

    # images of locally compatible inputs admit the tripartite state σ_A ⊗ |0><0|_B ⊗ σ_C
    rng = np.random.default_rng(404)
    k_ab, k_cb = sc.channels
    zero = np.diag([1.0, 0.0])
    worst = 0.0
    for _ in range(20):
        rho = LabeledOperator.on(qubits("A'", "B'", "C'"), random_state(rng, 8))
        out_ab = k_ab(permute_factors(partial_trace(rho, ["C'"]), k_ab.in_space.labels))
        out_cb = k_cb(permute_factors(partial_trace(rho, ["A'"]), k_cb.in_space.labels))
        sigma_a = partial_trace(out_ab, ["B"]).matrix
        sigma_c = partial_trace(out_cb, ["B"]).matrix
        tri = LabeledOperator.on(qubits("A", "B", "C"), np.kron(np.kron(sigma_a, zero), sigma_c))
        for traced, target in (("C", out_ab), ("A", out_cb)):
            red = permute_factors(partial_trace(tri, [traced]), target.space.labels)
            worst = max(worst, np.max(np.abs(red.matrix - target.matrix)))
    ok = rep.R < 1 - 1e-3 and cert.margin >= 1e-4 and dual_gap <= 1e-6 and worst <= 1e-12
    record(4, "SWAP pair incompatible, image states compatible", ok,
           f"R = {rep.R:.8f}, witness margin {cert.margin:.4f}, |primal - dual| {dual_gap:.1e}, "
           f"image residual {worst:.1e}")
    assert ok


def test_criterion_05_ghz_dichotomy(cache):
    r_product = cache.report("ghz-product").R
    r_ghz = cache.report("ghz").R
    ok = abs(r_product - 1) <= 1e-4 and abs(r_ghz - 0.75) <= 1e-4
    record(5, "product phi compatible, GHZ phi at 0.75", ok, f"R(product) = {r_product:.8f}, R(GHZ) = {r_ghz:.8f}")
    assert ok


def test_criterion_06_strong_duality(cache):
    gaps = {}
    for name in cache.scenarios:
        gaps[name] = abs(cache.report(name).solution.primal_objective - cache.dual(name))
    rng = np.random.default_rng(606)
    for k in range(20):
        sc = random_two_party_scenario(rng)
        gaps[f"random-{k}"] = abs(robustness(sc).solution.primal_objective
                                  - solve(build_dual(sc)).dual_objective)
    worst = max(gaps, key=gaps.get)
    ok = gaps[worst] <= 1e-6
    record(6, "primal and dual optima agree", ok, f"{len(gaps)} scenarios, worst {gaps[worst]:.1e} ({worst})")
    assert ok


def test_criterion_07_classical_chain():
    rng = np.random.default_rng(707)
    worst_marg, worst_r = 0.0, 0.0
    for _ in range(50):
        p1, p2 = random_chain(rng)
        glob = compose_chain(p1, p2)
        worst_marg = max(worst_marg,
                         np.max(np.abs(classical_marginal(glob, (["A", "B"], ["X", "Y"])).matrix - p1.matrix)),
                         np.max(np.abs(classical_marginal(glob, (["B", "C"], ["Y", "Z"])).matrix - p2.matrix)))
        r = classical_robustness(ClassicalScenario.from_channels([p1, p2]))
        worst_r = max(worst_r, abs(r - 1))
    ok = worst_marg <= 1e-12 and worst_r <= 1e-8
    record(7, "chain composition reproduces both marginals", ok,
           f"max marginal error {worst_marg:.1e}, max |R - 1| {worst_r:.1e}")
    assert ok


def test_criterion_08_pr_box():
    sc = pr_box_scenario()
    local = classical_local_compatibility(sc)
    r = classical_robustness(sc)
    ok = local.compatible and local.checked == 3 and r < 1 - 1e-3
    record(8, "PR boxes pairwise compatible, jointly incompatible", ok, f"robustness {r:.8f}")
    assert ok


def test_criterion_09_isotropic_extendibility(cache):
    r_low = cache.report("isotropic-0.6").R
    r_high = cache.report("isotropic-0.75").R
    ok = abs(r_low - 1) <= 1e-4 and r_high < 1 - 1e-3
    record(9, "2-extendibility of the isotropic W-channel", ok, f"R(0.6) = {r_low:.8f}, R(0.75) = {r_high:.8f}")
    assert ok


def test_criterion_10_discrimination_advantage(cache):
    details, ok = [], True
    for name in ("mpair", "swap"):
        sc = cache.scenarios[name]
        wit = channel_form_witness(sc, cache.report(name))
        task = build_discrimination_task(sc, wit)
        gap = success_probability(task, sc) - compatible_success_max(task, sc)
        ok &= task.strictly_positive and gap >= 1e-5
        details.append(f"{name} gap {gap:.2e} (min POVM eig {task.min_povm_eigenvalue:.1e})")
    compatible = {"ghz-product": cache.scenarios["ghz-product"], "noise-mixture": cache.scenarios["noise-mixture"],
                  "random product": _random_product_scenario()}
    for name, sc in compatible.items():
        rep = cache.reports.get(name) or robustness(sc)
        try:
            build_discrimination_task(sc, channel_form_witness(sc, rep))
        except NoAdvantagePossible:
            details.append(f"{name} no advantage")
        else:
            ok = False
            details.append(f"{name} unexpected task")
    record(10, "task advantage exactly for incompatible scenarios", ok, "; ".join(details))
    assert ok


def _ptrace_oracle(mat, traced):
    """Partial trace over qubits of A B C by repeated np.trace on the split tensor."""
    labels = ["A", "B", "C"]
    t = mat.reshape([2] * 6)
    for lab in sorted(traced, key=labels.index, reverse=True):
        i = labels.index(lab)
        t = np.trace(t, axis1=i, axis2=i + len(labels))
        labels.remove(lab)
    d = 2 ** len(labels)
    return t.reshape(d, d)


def _choi_by_matrix_units(kraus, d_in):
    total = 0
    for i in range(d_in):
        for j in range(d_in):
            unit = np.zeros((d_in, d_in))
            unit[i, j] = 1
            total = total + np.kron(sum(k @ unit @ k.conj().T for k in kraus), unit)
    return total / d_in


def test_criterion_11_core_properties():
    rng = np.random.default_rng(1111)
    counts = dict.fromkeys(("linearity", "round_trip", "equivalence", "semicausal"), 0)
    worst_lin = worst_rt = 0.0
    ok = True
    for _ in range(250):
        space = qubits("A", "B", "C")
        x, y = (LabeledOperator.on(space, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
                for _ in range(2))
        a, b = rng.normal(size=2)
        traced = list(rng.choice(["A", "B", "C"], size=int(rng.integers(1, 3)), replace=False))
        lhs = partial_trace(x * a + y * b, traced).matrix
        rhs = (partial_trace(x, traced) * a + partial_trace(y, traced) * b).matrix
        worst_lin = max(worst_lin, np.max(np.abs(lhs - rhs)),
                        np.max(np.abs(partial_trace(x, traced).matrix - _ptrace_oracle(x.matrix, traced))))
        counts["linearity"] += 1

    for _ in range(250):
        d_in, d_out = (int(v) for v in rng.choice([2, 3], size=2))
        kraus = random_kraus(rng, d_out, d_in, rank=int(rng.integers(1, 4)))
        ch = choi_from_kraus(kraus, LabeledSpace([("X'", d_in)]), LabeledSpace([("X", d_out)]))
        ref = _choi_by_matrix_units(kraus, d_in)
        back = QuantumChannel.from_json(ch.to_json())
        worst_rt = max(worst_rt, np.max(np.abs(ch.matrix - ref)), np.max(np.abs(back.matrix - ch.matrix)))
        counts["round_trip"] += 1

    for trial in range(250):
        kraus = semicausal_kraus(rng)[0] if trial % 2 else random_kraus(rng, 4, 4, rank=2)
        glob = choi_from_kraus(kraus, qubits("A'", "B'"), qubits("A", "B"))
        ns = is_no_signaling(glob, (["A"], ["A'"]))
        try:
            marginal_channel(glob, (["A"], ["A'"]))
            has_marginal = True
        except NotWellDefined:
            has_marginal = False
        ok &= ns == has_marginal == bool(trial % 2)
        counts["equivalence"] += 1

    for _ in range(250):
        kraus, g, _ = semicausal_kraus(rng)
        glob = choi_from_kraus(kraus, qubits("A'", "B'"), qubits("A", "B"))
        # necessity: a semi-causal channel satisfies the factorization condition
        ok &= signaling_residual(glob, (["A"], ["A'"])) <= 1e-10
        # sufficiency: the reduced channel predicts A for every B' input
        marg = marginal_channel(glob, (["A"], ["A'"]))
        rho, tau = random_state(rng, 2), random_state(rng, 2)
        full = LabeledOperator.on(qubits("A", "B"), glob(np.kron(rho, tau)).matrix)
        ok &= np.max(np.abs(partial_trace(full, ["B"]).matrix - marg(rho).matrix)) <= 1e-10
        counts["semicausal"] += 1
    ok &= worst_lin <= 1e-12 and worst_rt <= 1e-10 and sum(counts.values()) == 1000
    record(11, "core Choi and marginal properties", ok,
           f"{sum(counts.values())} cases, linearity {worst_lin:.1e}, round trip {worst_rt:.1e}")
    assert ok


def test_criterion_12_no_broadcasting(cache):
    sc = cache.scenarios["no-broadcast"]
    rep = cache.report("no-broadcast")
    cert = verify_witness(sc, rep.dual_witness)
    ok = rep.R < 1 - 1e-3 and cert.is_valid()
    record(12, "two identity channels cannot be broadcast", ok,
           f"R = {rep.R:.8f}, witness {cert.value_on_input:.6f} > {cert.compatible_max:.6f}")
    assert ok
