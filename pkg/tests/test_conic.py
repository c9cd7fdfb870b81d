import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from choimarg.conic import (Block, ConicProgram, ProgramBuilder, SolverOptions, Status, export_sdpa,
                            import_sdpa, parse_sdpa, presolve, realify_program, solve, write_sdpa)
from choimarg.errors import InfeasibleLinearSystem, ParseError, ShapeError, ValidationError

from conftest import random_hermitian, random_state

cp = pytest.importorskip("cvxpy")


def random_program(rng, n=4, m=5, with_sym=True, with_lp=True):
    """Bounded, strictly feasible program with a Hermitian, a symmetric and an LP block."""
    x0 = random_state(rng, n)
    s0 = np.real(random_state(rng, 3)) if with_sym else None
    v0 = rng.random(3) + 0.1 if with_lp else None
    pb = ProgramBuilder()
    h = pb.add_block("H", n, "herm")
    blocks = {h: x0}
    if with_sym:
        s = pb.add_block("S", 3, "sym")
        blocks[s] = s0
    if with_lp:
        v = pb.add_block("v", 3, "lp")
        blocks[v] = v0
    # normalization keeps the feasible set bounded
    norm = {h: np.eye(n)}
    rhs = 1.0
    if with_sym:
        norm[s] = np.eye(3)
        rhs += 1.0
    if with_lp:
        norm[v] = np.ones(3)
        rhs += float(v0.sum())
    pb.add_constraint(norm, rhs)
    data = []
    for _ in range(m):
        terms = {h: random_hermitian(rng, n)}
        val = float(np.real(np.trace(terms[h] @ x0)))
        if with_sym:
            a = rng.normal(size=(3, 3))
            terms[s] = a + a.T
            val += float(np.trace(terms[s] @ s0))
        if with_lp:
            terms[v] = rng.normal(size=3)
            val += float(terms[v] @ v0)
        pb.add_constraint(terms, val)
        data.append((terms, val))
    obj = {h: random_hermitian(rng, n)}
    if with_sym:
        a = rng.normal(size=(3, 3))
        obj[s] = a + a.T
    if with_lp:
        obj[v] = rng.normal(size=3)
    pb.set_objective(obj)
    return pb.build(), norm, rhs, data, obj


def cvxpy_value(norm, rhs, data, obj, n=4):
    x = cp.Variable((n, n), hermitian=True)
    s = cp.Variable((3, 3), symmetric=True) if 1 in obj else None
    v = cp.Variable(3, nonneg=True) if 2 in obj else None

    def pair(terms):
        e = cp.real(cp.trace(terms[0] @ x))
        if s is not None:
            e = e + cp.trace(terms[1] @ s)
        if v is not None:
            e = e + terms[2] @ v
        return e

    cons = [x >> 0, pair(norm) == rhs]
    if s is not None:
        cons.append(s >> 0)
    cons += [pair(t) == val for t, val in data]
    prob = cp.Problem(cp.Maximize(pair(obj)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_trivial_programs():
    pb = ProgramBuilder()
    x = pb.add_block("x", 2, "herm")
    pb.add_constraint({x: np.eye(2)}, 1.0)
    pb.set_objective({x: np.diag([1.0, 0.0])})
    sol = solve(pb.build())
    assert sol.optimal and abs(sol.primal_objective - 1) < 1e-7
    assert abs(sol.dual_objective - 1) < 1e-7
    pb = ProgramBuilder()
    v = pb.add_block("v", 2, "lp")
    pb.add_constraint({v: [1.0, 1.0]}, 1.0)
    pb.set_objective({v: [1.0, 0.0]})
    assert abs(solve(pb.build()).primal_objective - 1) < 1e-7


@pytest.mark.parametrize("seed", range(6))
def test_random_program_matches_cvxpy(seed):
    rng = np.random.default_rng(seed)
    prog, norm, rhs, data, obj = random_program(rng)
    sol = solve(prog)
    assert sol.status == Status.OPTIMAL
    ref = cvxpy_value(norm, rhs, data, obj)
    assert abs(sol.primal_objective - ref) < 1e-5 * (1 + abs(ref))
    assert abs(sol.primal_objective - sol.dual_objective) < 1e-6
    # primal feasibility and dual slack positivity at the returned point
    assert np.max(np.abs(prog.constraint_values(sol.x) - prog.b)) < 1e-6
    for blk, z in zip(prog.blocks, sol.z):
        if blk.is_matrix:
            assert np.linalg.eigvalsh((z + z.conj().T) / 2)[0] > -1e-7
        else:
            assert z.min() > -1e-7


def test_lp_matches_linprog(rng):
    n, m = 6, 3
    a = rng.normal(size=(m, n))
    x0 = rng.random(n) + 0.1
    b = a @ x0
    c = rng.normal(size=n)
    a_full = np.vstack([a, np.ones(n)])
    b_full = np.append(b, x0.sum())
    pb = ProgramBuilder()
    v = pb.add_block("v", n, "lp")
    pb.add_constraints({v: a_full}, b_full)
    pb.set_objective({v: c})
    sol = solve(pb.build())
    ref = linprog(-c, A_eq=a_full, b_eq=b_full, bounds=[(0, None)] * n, method="highs")
    assert abs(sol.primal_objective + ref.fun) < 1e-6


def test_presolve_removes_duplicates():
    pb = ProgramBuilder()
    x = pb.add_block("x", 2, "herm")
    pb.add_constraint({x: np.eye(2)}, 1.0)
    pb.add_constraint({x: 2 * np.eye(2)}, 2.0)
    pb.add_constraint({x: np.diag([1.0, 0.0])}, 0.25)
    pb.set_objective({x: np.array([[0, 1], [1, 0]])})
    prog = pb.build()
    assert len(presolve(prog)) == 2
    sol = solve(prog)
    assert sol.optimal and sol.y.shape == (3,)
    assert abs(sol.primal_objective - 2 * np.sqrt(0.25 * 0.75)) < 1e-6


def test_inconsistent_rows_raise():
    pb = ProgramBuilder()
    x = pb.add_block("x", 2, "herm")
    pb.add_constraint({x: np.eye(2)}, 1.0)
    pb.add_constraint({x: 2 * np.eye(2)}, 3.0)
    with pytest.raises(InfeasibleLinearSystem):
        solve(pb.build())


def test_max_iterations_status(rng):
    prog = random_program(rng)[0]
    sol = solve(prog, max_iter=2)
    assert sol.status == Status.MAX_ITERATIONS and not sol.optimal
    with pytest.raises(ValueError):
        SolverOptions(tol_gap=0)


def test_program_validation():
    with pytest.raises(ValidationError):
        Block("x", 0)
    with pytest.raises(ValidationError):
        Block("x", 2, "cone")
    a = sp.csr_matrix(np.array([[0, 1, 0, 0], [0, 0, 0, 0]], dtype=complex))
    with pytest.raises(ValidationError):
        ConicProgram([Block("x", 2)], [a], np.zeros(1))
    with pytest.raises(ShapeError):
        ConicProgram([Block("x", 2)], [sp.csr_matrix((3, 4))], np.zeros(1))
    pb = ProgramBuilder()
    x = pb.add_block("x", 2)
    with pytest.raises(ShapeError):
        pb.add_constraint({x: np.eye(3)}, 1.0)


def test_realified_program_same_value(rng):
    prog = random_program(rng)[0]
    real = realify_program(prog)
    assert [b.kind for b in real.blocks] == ["sym", "sym", "lp"]
    assert abs(solve(real).primal_objective - solve(prog).primal_objective) < 1e-6


def test_sdpa_round_trip(tmp_path, rng):
    prog = random_program(rng)[0]
    path = tmp_path / "p.dat-s"
    export_sdpa(prog, path)
    back = import_sdpa(path)
    real = realify_program(prog)
    assert back.equals(real, atol=1e-15)
    assert write_sdpa(back) == write_sdpa(real)
    assert abs(solve(back).primal_objective - solve(prog).primal_objective) < 1e-6


SMALL = """"toy
2
2
2 -1
1.0 0.5
0 1 1 1 1.0
1 1 1 1 1.0
1 1 2 2 1.0
2 2 1 1 1.0
"""


def test_parse_small_sdpa():
    prog = parse_sdpa(SMALL)
    assert prog.m == 2 and [b.kind for b in prog.blocks] == ["sym", "lp"]
    sol = solve(prog)
    assert abs(sol.primal_objective - 1.0) < 1e-7


def test_lower_triangle_is_mirrored():
    text = '2\n1\n2\n1 0\n0 1 2 1 1.0\n1 1 1 1 1.0\n1 1 2 2 1.0\n2 1 1 1 1.0\n'
    prog = parse_sdpa(text)
    assert np.allclose(prog.coefficient(0, 0), [[0, 1], [1, 0]])


@pytest.mark.parametrize("text, line", [
    ("x\n1\n1\n", 1),
    ("1\n1\n2\n1.0\n0 1 1 1\n", 5),
    ("1\n1\n2\n1.0\n0 1 3 1 1.0\n", 5),
    ("1\n1\n2\n1.0\n2 1 1 1 1.0\n", 5),
    ("1\n1\n-2\n1.0\n0 1 1 2 1.0\n", 5),
    ("1\n1\n2\n1.0\n0 1 1 2 1.0\n0 1 2 1 2.0\n", 6),
    ("1\n1\n2\n1.0\n0 1 1 1 1.0\n0 1 1 1 2.0\n", 6),
    ("1\n1\n2\n1.0\n0 1 1 1 nan\n", 5),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_sdpa(text)
    assert info.value.lineno == line
