import numpy as np
import pytest

import time

from choimarg.channels import QuantumChannel, StochasticChannel, choi_from_kraus
from choimarg.cmp_sdp import robustness
from choimarg.demos import mpair_scenario, swap_scenario
from choimarg.marginals import MarginalScenario, OutputInputPair
from choimarg.tensor_core import LabeledSpace

# (criterion, description, passed, detail) collected by the acceptance suite
ACCEPTANCE = []
TIMINGS = {}


def record(number, description, passed, detail=""):
    ACCEPTANCE.append((number, description, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number:2d}  {description}  {detail}")


def qubits(*labels):
    return LabeledSpace((lab, 2) for lab in labels)


def random_kraus(rng, d_out, d_in, rank=2):
    """Kraus operators of a random channel from a Haar-like isometry."""
    rank = max(rank, -(-d_in // d_out))
    g = rng.normal(size=(rank * d_out, d_in)) + 1j * rng.normal(size=(rank * d_out, d_in))
    q, _ = np.linalg.qr(g)
    return [q[k * d_out:(k + 1) * d_out] for k in range(rank)]


def random_channel(rng, in_space, out_space, rank=2) -> QuantumChannel:
    return choi_from_kraus(random_kraus(rng, out_space.dim, in_space.dim, rank), in_space, out_space)


def random_state(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_stochastic(rng, d_out, d_in, zero_prob=0.0):
    mat = rng.random((d_out, d_in))
    mat[rng.random((d_out, d_in)) < zero_prob] = 0.0
    mat[0, mat.sum(axis=0) == 0] = 1.0
    return mat / mat.sum(axis=0)


def bits(*labels):
    return LabeledSpace((lab, 2) for lab in labels)


def random_chain(rng, p_b=None):
    """``P_{AB|XY}`` and ``P_{BC|YZ}`` sharing the middle marginal ``P_{B|Y}``."""
    p_b = random_stochastic(rng, 2, 2) if p_b is None else p_b
    a_given = random_stochastic(rng, 2, 8)  # a | (b, x, y)
    c_given = random_stochastic(rng, 2, 8)  # c | (b, y, z)
    ab = np.zeros((4, 4))
    bc = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            for x in range(2):
                for y in range(2):
                    ab[2 * a + b, 2 * x + y] = a_given[a, 4 * b + 2 * x + y] * p_b[b, y]
                    bc[2 * b + a, 2 * y + x] = c_given[a, 4 * b + 2 * y + x] * p_b[b, y]
    return (StochasticChannel(bits("X", "Y"), bits("A", "B"), ab),
            StochasticChannel(bits("Y", "Z"), bits("B", "C"), bc))


def semicausal_kraus(rng, d_mem=2):
    """Kraus operators of ``(id_A ⊗ F_{B|MB'}) ∘ (G_{AM|A'} ⊗ id_B')``; B' cannot signal to A."""
    g = random_kraus(rng, 2 * d_mem, 2, rank=2)
    f = random_kraus(rng, 2, d_mem * 2, rank=2)
    out = []
    for gk in g:
        for fl in f:
            out.append(np.kron(np.eye(2), fl) @ np.kron(gk, np.eye(2)))
    return out, g, d_mem


def random_two_party_scenario(rng):
    """Two random qubit channels on distinct pairs drawn from the two-party pair shapes."""
    shapes = [(("A",), ("A'",)), (("B",), ("B'",)), (("A",), ("A'", "B'")), (("B",), ("A'", "B'")),
              (("A", "B"), ("A'",)), (("A", "B"), ("A'", "B'"))]
    idx = rng.choice(len(shapes), size=2, replace=False)
    chans = [random_channel(rng, qubits(*shapes[i][1]), qubits(*shapes[i][0]), rank=int(rng.integers(1, 3)))
             for i in idx]
    return MarginalScenario(qubits("A", "B"), qubits("A'", "B'"),
                            [OutputInputPair(c.out_space.labels, c.in_space.labels) for c in chans], chans)


def random_hermitian(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mpair():
    return mpair_scenario()


@pytest.fixture(scope="session")
def mpair_report(mpair):
    start = time.perf_counter()
    rep = robustness(mpair)
    TIMINGS["mpair"] = time.perf_counter() - start
    return rep


@pytest.fixture(scope="session")
def swap():
    return swap_scenario()


@pytest.fixture(scope="session")
def swap_report(swap):
    return robustness(swap)
