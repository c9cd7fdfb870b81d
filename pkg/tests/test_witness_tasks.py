import numpy as np
import pytest

from choimarg.channels import (depolarizing_channel, identity_channel, prepare_channel,
                               qc_channel_from_povm)
from choimarg.cmp_sdp import robustness, witness_max_over_compatible
from choimarg.errors import LabelMismatch, NoAdvantagePossible, ValidationError
from choimarg.marginals import MarginalScenario, broadcast_scenario
from choimarg.witness_tasks import (DiscriminationTask, build_discrimination_task, channel_form_witness,
                                    compatible_success_max, ic_states, product_decompose, success_probability,
                                    term_count_bound)

from conftest import qubits, random_channel, random_hermitian, random_state


@pytest.fixture(scope="module")
def broadcast():
    return broadcast_scenario([identity_channel("X'", "A"), identity_channel("X'", "C")])


@pytest.fixture(scope="module")
def broadcast_witness(broadcast):
    return channel_form_witness(broadcast)


def test_ic_states_are_states_and_span():
    for d in (2, 3, 4):
        states = ic_states(d)
        assert len(states) == d * d
        for s in states:
            assert np.isclose(np.trace(s), 1) and np.linalg.eigvalsh(s)[0] > -1e-12
        assert np.linalg.matrix_rank(np.array([s.reshape(-1) for s in states])) == d * d


@pytest.mark.parametrize("d_out, d_in", [(2, 2), (2, 4)])
def test_random_decomposition_reconstructs(d_out, d_in):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        h = random_hermitian(rng, d_out * d_in)
        dec = product_decompose(h, d_out, d_in)
        assert len(dec) == d_in * d_in
        worst = max(worst, dec.residual)
        for e in dec.operators:
            assert np.allclose(e, e.conj().T)
    assert worst <= (1e-10 if d_in == 2 else 1e-8)


def test_identity_decomposition(rng):
    dec = product_decompose(np.eye(4), 2, 2)
    assert np.max(np.abs(dec.reconstruct() - np.eye(4))) < 1e-14
    # tr[(I ⊗ I) L^J] = 1, so the channel-form sum equals d'
    ch = random_channel(rng, qubits("A'"), qubits("A"))
    total = sum(np.real(np.trace(e @ ch(s).matrix)) for e, s in zip(dec.operators, dec.states))
    assert abs(total - 2) < 1e-12


def test_product_input_decomposition(rng):
    a = random_hermitian(rng, 2)
    dec = product_decompose(np.kron(a, np.diag([1.0, 0.0])), 2, 2)
    assert np.allclose(dec.operators[0], a, atol=1e-12)
    assert all(np.max(np.abs(e)) < 1e-12 for e in dec.operators[1:])
    ch = random_channel(rng, qubits("A'"), qubits("A"))
    total = sum(np.real(np.trace(e @ ch(s).matrix)) for e, s in zip(dec.operators, dec.states))
    assert abs(total - np.real(np.trace(a @ ch(np.diag([1.0, 0.0])).matrix))) < 1e-12


def test_decomposition_rejects_bad_input():
    with pytest.raises(ValidationError):
        product_decompose(np.triu(np.ones((4, 4))), 2, 2)
    with pytest.raises(ValidationError):
        product_decompose(np.eye(6), 4, 2)
    with pytest.raises(ValidationError):
        product_decompose(np.eye(4))


def test_witness_has_positive_margin(broadcast, broadcast_witness):
    wit = broadcast_witness
    assert not wit.null
    assert wit.margin > 1e-4
    assert wit.n_terms == term_count_bound(broadcast) == 7
    rep = robustness(broadcast)
    for w, op in zip(rep.dual_witness, wit.choi_operators()):
        assert np.allclose(w.matrix, op, atol=1e-9)


def test_channel_form_matches_choi_pairing(broadcast, broadcast_witness, rng):
    wit = broadcast_witness
    chans = [random_channel(rng, ch.in_space, ch.out_space, rank=2) for ch in broadcast.channels]
    by_channels = wit.evaluate(chans)
    by_choi = sum(np.real(np.vdot(w, ch.matrix)) for w, ch in zip(wit.choi_operators(), chans))
    assert abs(by_channels - by_choi) < 1e-9
    assert abs(wit.evaluate(broadcast.channels) - wit.lhs) < 1e-12


def test_affine_shift_keeps_margin_sign(broadcast, broadcast_witness):
    wit = broadcast_witness
    shift = 0.1 - min(np.linalg.eigvalsh(h)[0] for ops in wit.operators for h in ops)
    kappa = 0.37
    shifted = [[kappa * (h + shift * np.eye(h.shape[0])) for h in ops] for ops in wit.operators]
    choi = [ch.d_in * sum(np.kron(h, s.T) for h, s in zip(ops, sts))
            for ch, ops, sts in zip(broadcast.channels, shifted, wit.states)]
    lhs = sum(np.real(np.trace(h @ ch(s).matrix))
              for ch, ops, sts in zip(broadcast.channels, shifted, wit.states) for h, s in zip(ops, sts))
    rhs = witness_max_over_compatible(broadcast, choi)
    n_terms = sum(len(ops) for ops in wit.operators)
    assert abs(lhs - kappa * (wit.lhs + shift * n_terms)) < 1e-9
    assert abs(rhs - kappa * (wit.rhs + shift * n_terms)) < 1e-6
    assert np.sign(lhs - rhs) == np.sign(wit.margin) == 1


def test_compatible_scenario_gives_null_witness(rng):
    ea = random_channel(rng, qubits("A'"), qubits("A"))
    eb = random_channel(rng, qubits("B'"), qubits("B"))
    sc = MarginalScenario.from_channels([ea, eb])
    wit = channel_form_witness(sc)
    assert wit.null and wit.lhs == wit.rhs == 0
    assert all(np.max(np.abs(h)) == 0 for ops in wit.operators for h in ops)
    with pytest.raises(NoAdvantagePossible):
        build_discrimination_task(sc, wit)


def test_noisy_broadcast_has_no_advantage():
    sc = broadcast_scenario([depolarizing_channel(0.5, "X'", "A"), depolarizing_channel(0.5, "X'", "C")])
    with pytest.raises(NoAdvantagePossible):
        build_discrimination_task(sc)


def test_task_from_broadcast_witness(broadcast, broadcast_witness):
    task = build_discrimination_task(broadcast, broadcast_witness)
    assert task.strictly_positive and task.min_povm_eigenvalue > 0
    assert 0 < task.info["eps"] < 1
    p_e = success_probability(task, broadcast)
    p_c = compatible_success_max(task, broadcast)
    assert p_e - p_c >= 1e-5


def _uniform_task(n, d_in=2, d_out=2, n_pairs=1, rng=None):
    states = [[random_state(rng, d_in) for _ in range(n)] for _ in range(n_pairs)]
    return DiscriminationTask([qubits("A'")] * n_pairs, [qubits("A")] * n_pairs, np.full(n_pairs, 1 / n_pairs),
                              [np.full(n, 1 / n)] * n_pairs, states,
                              [[np.eye(d_out) / n] * n for _ in range(n_pairs)])


def test_uniform_povm_gives_one_over_n(rng):
    task = _uniform_task(5, rng=rng)
    for _ in range(3):
        ch = random_channel(rng, qubits("A'"), qubits("A"))
        assert abs(success_probability(task, [ch]) - 1 / 5) < 1e-12


def test_perfect_discrimination_through_identity():
    basis = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    task = DiscriminationTask([qubits("A'")], [qubits("A")], [1.0], [[0.5, 0.5]], [basis], [basis])
    assert abs(success_probability(task, [identity_channel("A'", "A")]) - 1) < 1e-12
    # a measure-and-prepare channel with the same basis is just as good
    assert abs(success_probability(task, [qc_channel_from_povm(basis)]) - 1) < 1e-12
    erase = prepare_channel(np.eye(2) / 2, qubits("A'"), qubits("A"))
    assert abs(success_probability(task, [erase]) - 0.5) < 1e-12
    assert not task.strictly_positive


def test_task_validation(rng):
    basis = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    with pytest.raises(ValidationError):
        DiscriminationTask([qubits("A'")], [qubits("A")], [0.9], [[0.5, 0.5]], [basis], [basis])
    with pytest.raises(ValidationError):
        DiscriminationTask([qubits("A'")], [qubits("A")], [1.0], [[0.5, 0.5]], [basis], [[np.eye(2), np.eye(2)]])
    with pytest.raises(ValidationError):
        DiscriminationTask([qubits("A'")], [qubits("A")], [1.0], [[0.5, 0.5]], [[np.eye(2), basis[0]]], [basis])
    with pytest.raises(ValidationError):
        DiscriminationTask([qubits("A'")], [qubits("A")], [1.0], [[1.0]], [basis], [basis])


def test_task_json_round_trip(broadcast, broadcast_witness):
    task = build_discrimination_task(broadcast, broadcast_witness, eps=0.01)
    back = DiscriminationTask.from_json(task.to_json())
    assert back.info == task.info
    assert abs(success_probability(back, broadcast) - success_probability(task, broadcast)) < 1e-12
    with pytest.raises(ValidationError):
        DiscriminationTask.from_json({"pairs": [{"p": 1.0}]})


def test_dimension_mismatch(rng):
    task = _uniform_task(3, rng=rng)
    wide = random_channel(rng, qubits("A'", "B'"), qubits("A"))
    with pytest.raises(LabelMismatch):
        success_probability(task, [wide])
    with pytest.raises(LabelMismatch):
        success_probability(task, [wide, wide])
    sc = MarginalScenario.from_channels([wide])
    with pytest.raises(LabelMismatch):
        compatible_success_max(task, sc)


def test_explicit_eps_is_checked(broadcast, broadcast_witness):
    with pytest.raises(ValidationError):
        build_discrimination_task(broadcast, broadcast_witness, eps=1.0)
