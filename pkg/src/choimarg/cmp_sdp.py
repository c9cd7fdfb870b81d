"""Incompatibility robustness of channel marginal problems as semidefinite programs.

The robustness of a scenario with local channels ``E_{X|X'}`` is

    R = max λ  s.t.  ρ ⪰ 0 on S S',  tr_S ρ = I/d_{S'},
                      tr_{S∖X} ρ = tr_{SS'∖XX'} ρ ⊗ I/d_{S'∖X'}   (no signaling),
                      tr_{SS'∖XX'} ρ - λ E_{X|X'} ⪰ 0,  0 ≤ λ ≤ 1.

Linear constraints on ``ρ`` are generated by testing against a product basis
of Hermitian operators: on each factor the identity plus the traceless
operators ``|0><0| - |k><k|``, ``|k><l| + |l><k|`` and ``i(|l><k| - |k><l|)``.
Distinct product tuples are linearly independent, so the equality system is
non-redundant by construction.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .channels import QuantumChannel, completely_depolarizing
from .conic import ConicProgram, ConicSolution, ProgramBuilder, SolverOptions, solve
from .errors import CapacityExceeded, InvalidWitness, LabelMismatch, ShapeError, SolverError
from .marginals import MarginalScenario
from .tensor_core import (
    DEFAULT_TOL,
    LabeledOperator,
    LabeledSpace,
    ToleranceConfig,
    embed_identity,
    min_eigenvalue,
    partial_trace,
    permute_array,
    permute_factors,
    ptrace_array,
)

__all__ = [
    "RobustnessReport",
    "WitnessCertificate",
    "max_block_dim",
    "build_primal",
    "build_dual",
    "robustness",
    "is_compatible",
    "feasibility_global",
    "witness_max_over_compatible",
    "verify_witness",
    "witness_value",
    "primal_residuals",
    "repair_channel",
]

DEFAULT_MAX_DIM = 256


def max_block_dim() -> int:
    """Largest admissible block size, overridable by ``CHOIMARG_MAX_DIM``."""
    raw = os.environ.get("CHOIMARG_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        val = int(raw)
    except ValueError:
        raise CapacityExceeded(f"CHOIMARG_MAX_DIM must be an integer, got {raw!r}") from None
    if val < 1:
        raise CapacityExceeded("CHOIMARG_MAX_DIM must be positive")
    return val


# -- product basis ------------------------------------------------------------


def _factor_basis(d: int):
    """Hermitian basis of a ``d``-level factor as (rows, cols, vals) triplets; index 0 is I."""
    basis = [(np.arange(d), np.arange(d), np.ones(d, dtype=complex))]
    for k in range(1, d):
        basis.append((np.array([0, k]), np.array([0, k]), np.array([1, -1], dtype=complex)))
    for k, l in itertools.combinations(range(d), 2):
        basis.append((np.array([k, l]), np.array([l, k]), np.array([1, 1], dtype=complex)))
        basis.append((np.array([k, l]), np.array([l, k]), np.array([-1j, 1j])))
    return basis


_BASIS_CACHE: dict = {}


def _basis(d: int):
    if d not in _BASIS_CACHE:
        _BASIS_CACHE[d] = _factor_basis(d)
    return _BASIS_CACHE[d]


def _product_entries(codes: Sequence[int], dims: Sequence[int]):
    rows = np.zeros(1, dtype=np.int64)
    cols = np.zeros(1, dtype=np.int64)
    vals = np.ones(1, dtype=complex)
    for code, d in zip(codes, dims):
        r, c, v = _basis(d)[code]
        rows = (rows[:, None] * d + r[None, :]).ravel()
        cols = (cols[:, None] * d + c[None, :]).ravel()
        vals = (vals[:, None] * v[None, :]).ravel()
    return rows, cols, vals


def _rows_matrix(tuples, dims, sign=1.0) -> sp.csr_matrix:
    """Sparse (k, n*n) matrix whose row t is the flattened product operator ``tuples[t]``."""
    n = int(np.prod(dims, dtype=np.int64)) if len(dims) else 1
    rr, cc, vv = [], [], []
    for t, codes in enumerate(tuples):
        r, c, v = _product_entries(codes, dims)
        rr.append(np.full(r.size, t))
        cc.append(r * n + c)
        vv.append(sign * v)
    if not rr:
        return sp.csr_matrix((0, n * n), dtype=complex)
    return sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
                         shape=(len(tuples), n * n), dtype=complex)


def _product_dense(codes, dims) -> np.ndarray:
    n = int(np.prod(dims, dtype=np.int64)) if len(dims) else 1
    r, c, v = _product_entries(codes, dims)
    out = np.zeros((n, n), dtype=complex)
    np.add.at(out, (r, c), v)
    return out


def _all_codes(dims):
    return itertools.product(*[range(d * d) for d in dims])


def _nonzero_codes(dims):
    """Code tuples with at least one non-identity factor (empty if ``dims`` is empty)."""
    return (t for t in _all_codes(dims) if any(t))


# -- scenario geometry --------------------------------------------------------


class _Model:
    """Label bookkeeping shared by the program builders."""

    def __init__(self, scenario: MarginalScenario, max_dim: int | None = None):
        self.scenario = scenario
        self.space = scenario.global_space
        self.labels = self.space.labels
        self.dims = self.space.dims
        self.dim = self.space.dim
        self.out_labels = scenario.global_out.labels
        self.in_labels = scenario.global_in.labels
        limit = max_block_dim() if max_dim is None else max_dim
        if self.dim > limit:
            raise CapacityExceeded(f"global Choi block has dimension {self.dim} > limit {limit}")

    def pair_labels(self, k: int):
        ch = self.scenario.channels[k]
        return list(ch.out_space.labels), list(ch.in_space.labels)

    def codes_for(self, assignment: dict) -> tuple:
        return tuple(assignment.get(lab, 0) for lab in self.labels)

    def normalization_rows(self):
        """Tuples and right-hand sides for ``tr_S ρ = I/d_{S'}``."""
        in_dims = [self.space.dim_of(lab) for lab in self.in_labels]
        tuples, rhs = [], []
        for codes in _all_codes(in_dims):
            tuples.append(self.codes_for(dict(zip(self.in_labels, codes))))
            rhs.append(0.0 if any(codes) else 1.0)
        return tuples, np.array(rhs)

    def no_signaling_tuples(self):
        seen, tuples = set(), []
        for k in range(len(self.scenario.pairs)):
            x, xp = self.pair_labels(k)
            rest_in = [lab for lab in self.in_labels if lab not in xp]
            if not x or not rest_in:
                continue
            dx = [self.space.dim_of(lab) for lab in x]
            dr = [self.space.dim_of(lab) for lab in rest_in]
            dxp = [self.space.dim_of(lab) for lab in xp]
            for cx in _nonzero_codes(dx):
                for cr in _nonzero_codes(dr):
                    for cxp in _all_codes(dxp):
                        assign = dict(zip(x, cx))
                        assign.update(zip(rest_in, cr))
                        assign.update(zip(xp, cxp))
                        codes = self.codes_for(assign)
                        if codes not in seen:
                            seen.add(codes)
                            tuples.append(codes)
        return tuples

    def embed(self, k: int, mat: np.ndarray) -> np.ndarray:
        """``mat ⊗ I`` on the global space, ``mat`` given in the channel's factor order."""
        ch = self.scenario.channels[k]
        local = ch.space
        global_order = [lab for lab in self.labels if lab in local]
        perm = [local.index(lab) for lab in global_order]
        mat = permute_array(mat, local.dims, perm)
        return embed_identity(mat, self.space, global_order)

    def reduce(self, k: int, rho: np.ndarray) -> np.ndarray:
        """``tr_{SS'∖XX'} ρ`` in the channel's factor order."""
        ch = self.scenario.channels[k]
        op = partial_trace(LabeledOperator.on(self.space, rho),
                           [lab for lab in self.labels if lab not in ch.space])
        return permute_factors(op, ch.space.labels).matrix


def _add_compatibility_constraints(pb: ProgramBuilder, model: _Model, rho: int):
    tuples, rhs = model.normalization_rows()
    pb.add_constraints({rho: _rows_matrix(tuples, model.dims)}, rhs)
    ns = model.no_signaling_tuples()
    if ns:
        pb.add_constraints({rho: _rows_matrix(ns, model.dims)}, np.zeros(len(ns)))


# -- primal -------------------------------------------------------------------


def build_primal(scenario: MarginalScenario, max_dim: int | None = None) -> ConicProgram:
    """Robustness program; block 0 is ρ, then one slack per pair, then ``[λ, 1-λ]``.

    Each slack lives on ``X X'`` (channel factor order) and equals
    ``tr_{SS'∖XX'} ρ - λ E``; under the no-signaling equalities this is
    equivalent to the inequality on ``X S'``.
    """
    model = _Model(scenario, max_dim)
    pb = ProgramBuilder()
    rho = pb.add_block("rho", model.dim, "herm")
    slacks = [pb.add_block(f"slack{k}", ch.d_in * ch.d_out, "herm")
              for k, ch in enumerate(scenario.channels)]
    lam = pb.add_block("lambda", 2, "lp")
    _add_compatibility_constraints(pb, model, rho)
    for k, ch in enumerate(scenario.channels):
        local = ch.space
        choi = ch.matrix
        tuples_local = list(_all_codes(local.dims))
        tuples_global = [model.codes_for(dict(zip(local.labels, t))) for t in tuples_local]
        tr_qe = np.array([np.real(np.vdot(_product_dense(t, local.dims), choi))
                          for t in tuples_local])
        lp_rows = np.zeros((len(tuples_local), 2))
        lp_rows[:, 0] = tr_qe
        pb.add_constraints({
            slacks[k]: _rows_matrix(tuples_local, local.dims),
            rho: _rows_matrix(tuples_global, model.dims, sign=-1.0),
            lam: lp_rows,
        }, np.zeros(len(tuples_local)))
    pb.add_constraint({lam: [1.0, 1.0]}, 1.0)
    pb.set_objective({lam: [1.0, 0.0]})
    return pb.build()


# -- dual ---------------------------------------------------------------------


def build_dual(scenario: MarginalScenario, max_dim: int | None = None) -> ConicProgram:
    """Program whose dual (``min b^T y``) is the robustness dual.

    The variables ``y`` are ``z``, the coordinates of ``H_{S'}``, of each
    ``H^{(XS')}`` and of each ``Z^{(XS')}`` in the product basis.  Linear
    matrix inequalities: the big block on ``S S'``, the scalar inequality
    ``z + sum tr[Z (E ⊗ I/d)] >= 1``, ``z >= 0`` and ``Z^{(XS')} ⪰ 0``.
    Coordinates of ``H^{(XS')}`` are restricted to operators with a traceless
    factor on ``S'∖X'``; the remaining ones drop out of the constraint.
    """
    model = _Model(scenario, max_dim)
    pb = ProgramBuilder()
    big = pb.add_block("lmi", model.dim, "herm")
    lp = pb.add_block("scalars", 2, "lp")  # [z + sum tr(Z E~) - 1, z]
    zblocks = []
    geo = []
    for k in range(len(scenario.pairs)):
        x, xp = model.pair_labels(k)
        xs_labels = [lab for lab in model.labels if lab in x or lab in model.in_labels]
        xs_dims = [model.space.dim_of(lab) for lab in xs_labels]
        geo.append((x, xp, xs_labels, xs_dims))
        zblocks.append(pb.add_block(f"Z{k}", int(np.prod(xs_dims)), "herm"))
    # z
    pb.add_constraint({lp: [1.0, 1.0]}, 1.0)
    # H_{S'}
    tuples, rhs = model.normalization_rows()
    pb.add_constraints({big: _rows_matrix(tuples, model.dims)}, rhs)
    for k, (x, xp, xs_labels, xs_dims) in enumerate(geo):
        rest_in = [lab for lab in model.in_labels if lab not in xp]
        # H^{(XS')}: tuples with a traceless factor on S'∖X'
        h_tuples = []
        for codes in _all_codes(xs_dims):
            assign = dict(zip(xs_labels, codes))
            if any(assign[lab] for lab in rest_in):
                h_tuples.append(model.codes_for(assign))
        if h_tuples:
            pb.add_constraints({big: _rows_matrix(h_tuples, model.dims)}, np.zeros(len(h_tuples)))
        # Z^{(XS')}
        ch = scenario.channels[k]
        target = _target_on_xs(ch, xs_labels, model)
        local = list(_all_codes(xs_dims))
        glob = [model.codes_for(dict(zip(xs_labels, t))) for t in local]
        lp_rows = np.zeros((len(local), 2))
        lp_rows[:, 0] = [np.real(np.vdot(_product_dense(t, xs_dims), target)) for t in local]
        pb.add_constraints({
            big: _rows_matrix(glob, model.dims, sign=-1.0),
            lp: lp_rows,
            zblocks[k]: _rows_matrix(local, xs_dims),
        }, np.zeros(len(local)))
    pb.set_objective({lp: [1.0, 0.0]})
    return pb.build()


def _target_on_xs(ch: QuantumChannel, xs_labels, model: _Model) -> np.ndarray:
    """``E ⊗ I_{S'∖X'}/d`` on ``X S'`` in the given label order."""
    xs_space = LabeledSpace((lab, model.space.dim_of(lab)) for lab in xs_labels)
    order = [lab for lab in xs_labels if lab in ch.space]
    perm = [ch.space.index(lab) for lab in order]
    mat = permute_array(ch.matrix, ch.space.dims, perm)
    return embed_identity(mat, xs_space, order, normalized=True)


# -- reports ------------------------------------------------------------------


@dataclass
class WitnessCertificate:
    operators: list
    value_on_input: float
    compatible_max: float

    @property
    def margin(self) -> float:
        return self.value_on_input - self.compatible_max

    def is_valid(self, tol_margin: float = 1e-7) -> bool:
        return self.margin > tol_margin

    def to_json(self):
        return {
            "value_on_input": self.value_on_input,
            "compatible_max": self.compatible_max,
            "margin": self.margin,
            "operators": [op.to_json() for op in self.operators],
        }


@dataclass
class RobustnessReport:
    R: float
    global_choi: LabeledOperator
    noise_channels: list
    dual_witness: list
    primal_dual_gap: float
    solution: ConicSolution = field(repr=False, default=None)
    scenario: MarginalScenario = field(repr=False, default=None)

    def is_compatible(self, tol: float = 1e-5) -> bool:
        return self.R >= 1 - tol

    def to_json(self):
        rho = self.global_choi
        return {
            "R": self.R,
            "gap": self.primal_dual_gap,
            "noise": [ch.to_json() for ch in self.noise_channels],
            "witness": [op.to_json() for op in self.dual_witness],
            "global_choi": rho.to_json(),
        }


def repair_channel(matrix: np.ndarray, in_space: LabeledSpace, out_space: LabeledSpace,
                   tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Closest-by-construction valid channel to a numerically perturbed Choi matrix.

    Negative eigenvalues are clipped and the input marginal is restored by
    the congruence ``(I ⊗ K) J (I ⊗ K)`` with ``K = (d_in tr_out J)^{-1/2}``.
    """
    mat = (matrix + matrix.conj().T) / 2
    w, v = np.linalg.eigh(mat)
    mat = (v * np.clip(w, 0, None)) @ v.conj().T
    d_out, d_in = out_space.dim, in_space.dim
    marg = ptrace_array(mat, [d_out, d_in], [1]) * d_in
    mw, mv = np.linalg.eigh((marg + marg.conj().T) / 2)
    if mw.min() <= 1e-12:
        raise SolverError("cannot repair channel: singular input marginal")
    k = (mv / np.sqrt(mw)) @ mv.conj().T
    big = np.kron(np.eye(d_out), k)
    mat = big @ mat @ big.conj().T
    return QuantumChannel.from_matrix(in_space, out_space, (mat + mat.conj().T) / 2, tol)


def _check_solution(sol: ConicSolution, what: str):
    if not sol.optimal:
        raise SolverError(
            f"{what}: solver stopped with status {sol.status} after {sol.iterations} iterations "
            f"(pinf {sol.primal_infeasibility:.1e}, dinf {sol.dual_infeasibility:.1e}, gap {sol.gap:.1e})")


def robustness(scenario: MarginalScenario, opts: SolverOptions | None = None,
               max_dim: int | None = None, noise_threshold: float = 1e-6) -> RobustnessReport:
    """Incompatibility robustness with optimal global Choi, noise channels and witness."""
    prog = build_primal(scenario, max_dim)
    sol = solve(prog, opts)
    _check_solution(sol, "robustness")
    model = _Model(scenario, max_dim)
    rho = sol.x[0]
    rho = (rho + rho.conj().T) / 2
    n_pairs = len(scenario.pairs)
    r_val = float(np.clip(sol.x[1 + n_pairs][0], 0.0, 1.0))
    noise, witness = [], []
    for k, ch in enumerate(scenario.channels):
        if 1 - r_val <= noise_threshold:
            noise.append(completely_depolarizing(ch.in_space, ch.out_space))
        else:
            local = model.reduce(k, rho)
            noise.append(repair_channel((local - r_val * ch.matrix) / (1 - r_val),
                                        ch.in_space, ch.out_space))
        h = sol.z[1 + k]
        witness.append(LabeledOperator.on(ch.space, (h + h.conj().T) / 2))
    return RobustnessReport(
        R=r_val,
        global_choi=LabeledOperator.on(model.space, rho),
        noise_channels=noise,
        dual_witness=witness,
        primal_dual_gap=abs(sol.primal_objective - sol.dual_objective),
        solution=sol,
        scenario=scenario,
    )


def is_compatible(scenario: MarginalScenario, tol: float = 1e-5, opts: SolverOptions | None = None) -> bool:
    return robustness(scenario, opts).is_compatible(tol)


def feasibility_global(scenario: MarginalScenario, tol: float = 1e-5,
                       opts: SolverOptions | None = None,
                       report: RobustnessReport | None = None) -> QuantumChannel | None:
    """A global channel with the given marginals, or None if the scenario is incompatible."""
    if report is None:
        report = robustness(scenario, opts)
    if not report.is_compatible(tol):
        return None
    return repair_channel(report.global_choi.matrix, scenario.global_in, scenario.global_out)


# -- witnesses ----------------------------------------------------------------


def _as_local_matrix(op, ch: QuantumChannel) -> np.ndarray:
    if isinstance(op, LabeledOperator):
        if set(op.row_space.labels) != set(ch.space.labels) or not op.is_square:
            raise LabelMismatch(f"witness on {op.row_space.labels}, pair needs {ch.space.labels}")
        return permute_factors(op, ch.space.labels).matrix
    mat = np.asarray(op, dtype=complex)
    if mat.shape != (ch.space.dim, ch.space.dim):
        raise ShapeError(f"witness shape {mat.shape}, expected {(ch.space.dim,) * 2}")
    return mat


def _max_linear_over_compatible(scenario: MarginalScenario, ops, opts=None, max_dim=None) -> float:
    """``max sum_k tr(H_k L_k)`` over compatible families, for Hermitian ``H_k``."""
    model = _Model(scenario, max_dim)
    if len(ops) != len(scenario.pairs):
        raise InvalidWitness("one operator per pair is required")
    obj = np.zeros((model.dim, model.dim), dtype=complex)
    for k, op in enumerate(ops):
        mat = _as_local_matrix(op, scenario.channels[k])
        obj += model.embed(k, (mat + mat.conj().T) / 2)
    pb = ProgramBuilder()
    rho = pb.add_block("rho", model.dim, "herm")
    _add_compatibility_constraints(pb, model, rho)
    pb.set_objective({rho: obj})
    sol = solve(pb.build(), opts)
    _check_solution(sol, "compatible maximum")
    return float(sol.primal_objective)


def witness_max_over_compatible(scenario: MarginalScenario, ops, tol: ToleranceConfig = DEFAULT_TOL,
                                opts: SolverOptions | None = None) -> float:
    """``max_{L compatible} sum_k tr(H_k L_k^J)``; the channels of ``scenario`` are ignored."""
    for k, op in enumerate(ops):
        mat = _as_local_matrix(op, scenario.channels[k])
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > tol.tol_herm or min_eigenvalue(mat) < -tol.tol_psd:
            raise InvalidWitness(f"witness operator {k} is not positive semidefinite")
    return _max_linear_over_compatible(scenario, ops, opts)


def witness_value(scenario: MarginalScenario, ops) -> float:
    """``sum_k tr(H_k E_k^J)`` for the scenario's own channels."""
    total = 0.0
    for k, (op, ch) in enumerate(zip(ops, scenario.channels)):
        total += float(np.real(np.vdot(_as_local_matrix(op, ch), ch.matrix)))
    return total


def verify_witness(scenario: MarginalScenario, ops, tol: ToleranceConfig = DEFAULT_TOL,
                   opts: SolverOptions | None = None) -> WitnessCertificate:
    rhs = witness_max_over_compatible(scenario, ops, tol, opts)
    lhs = witness_value(scenario, ops)
    labeled = [op if isinstance(op, LabeledOperator) else LabeledOperator.on(ch.space, op)
               for op, ch in zip(ops, scenario.channels)]
    return WitnessCertificate(labeled, lhs, rhs)


def primal_residuals(scenario: MarginalScenario, rho, lam: float) -> dict:
    """Violations of every robustness constraint at ``(ρ, λ)``.

    Keys: ``psd`` (negative part of the minimum eigenvalue of ρ),
    ``normalization`` (max-abs error of ``tr_S ρ``), ``no_signaling`` and
    ``dominance`` (per-pair lists: factorization error and negative part of
    ``tr_{S∖X} ρ - λ E ⊗ I/d``).
    """
    model = _Model(scenario)
    mat = rho.matrix if isinstance(rho, LabeledOperator) else np.asarray(rho)
    space = model.space
    n_out = len(scenario.global_out)
    res = {"psd": max(0.0, -min_eigenvalue(mat))}
    marg_in = ptrace_array(mat, space.dims, list(range(n_out, len(space))))
    res["normalization"] = float(np.max(np.abs(marg_in - np.eye(marg_in.shape[0]) / marg_in.shape[0])))
    res["no_signaling"], res["dominance"] = [], []
    for k, ch in enumerate(scenario.channels):
        x, xp = model.pair_labels(k)
        xs_labels = [lab for lab in model.labels if lab in x or lab in model.in_labels]
        keep = [space.index(lab) for lab in xs_labels]
        t = ptrace_array(mat, space.dims, keep)
        xs_space = LabeledSpace((lab, space.dim_of(lab)) for lab in xs_labels)
        xx = [lab for lab in xs_labels if lab in x or lab in xp]
        reduced = ptrace_array(t, xs_space.dims, [xs_space.index(lab) for lab in xx])
        rebuilt = embed_identity(reduced, xs_space, xx, normalized=True)
        res["no_signaling"].append(float(np.max(np.abs(t - rebuilt), initial=0.0)))
        target = _target_on_xs(ch, xs_labels, model)
        res["dominance"].append(max(0.0, -min_eigenvalue(t - lam * target)))
    return res
