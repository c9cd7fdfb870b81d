"""Classical channel marginal problems over stochastic matrices.

A global conditional distribution ``P(s|s')`` has a well-defined marginal on
``X|X'`` when ``sum_{s∖x} P(s|s')`` does not depend on ``s'∖x'``.  Chains
``AB|XY, BC|YZ`` always have a solution given by conditional composition;
loops such as three PR boxes need not.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from string import ascii_letters
from typing import Sequence

import numpy as np

from .channels import StochasticChannel, classical_embedding
from .conic import ProgramBuilder, SolverOptions, solve
from .errors import (InvalidScenario, LabelMismatch, LocallyIncompatible, NotWellDefined,
                     SolverError, ValidationError)
from .marginals import LocalCompatibilityReport, MarginalScenario, OutputInputPair
from .tensor_core import DEFAULT_TOL, LabeledSpace, ToleranceConfig

__all__ = [
    "ClassicalScenario",
    "classical_marginal",
    "compose_chain",
    "classical_robustness",
    "classical_local_compatibility",
    "pr_box",
    "pr_box_scenario",
    "LP_TOL",
]

# LPs are cheap; solve them tighter than the SDP default
LP_TOL = 1e-10


def _union(spaces) -> LabeledSpace:
    facs = {}
    for sp in spaces:
        for lab, d in sp.factors:
            if facs.setdefault(lab, d) != d:
                raise InvalidScenario(f"label {lab!r} used with two alphabet sizes")
    return LabeledSpace(facs.items())


@dataclass(frozen=True, eq=False)
class ClassicalScenario:
    """Global alphabets ``S``, ``S'`` and one stochastic channel per pair ``X|X'``."""

    global_out: LabeledSpace
    global_in: LabeledSpace
    channels: tuple

    def __init__(self, global_out: LabeledSpace, global_in: LabeledSpace,
                 channels: Sequence[StochasticChannel]):
        channels = tuple(channels)
        if not channels:
            raise InvalidScenario("a scenario needs at least one pair")
        if set(global_out.labels) & set(global_in.labels):
            raise InvalidScenario("labels used for both outputs and inputs")
        seen = set()
        for ch in channels:
            key = OutputInputPair(ch.out_space.labels, ch.in_space.labels).key
            if key in seen:
                raise InvalidScenario("pair appears more than once")
            seen.add(key)
            for sp, glob in ((ch.out_space, global_out), (ch.in_space, global_in)):
                for lab, d in sp.factors:
                    if lab not in glob:
                        raise LabelMismatch(f"label {lab!r} not in {glob.labels}")
                    if glob.dim_of(lab) != d:
                        raise LabelMismatch(f"alphabet size of {lab!r} differs from the global one")
        object.__setattr__(self, "global_out", global_out)
        object.__setattr__(self, "global_in", global_in)
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_channels(cls, channels: Sequence[StochasticChannel]) -> "ClassicalScenario":
        return cls(_union(ch.out_space for ch in channels), _union(ch.in_space for ch in channels), channels)

    @property
    def pairs(self) -> list:
        return [OutputInputPair(ch.out_space.labels, ch.in_space.labels) for ch in self.channels]

    def to_quantum(self) -> MarginalScenario:
        """The same scenario with every stochastic channel dephased into a quantum channel."""
        chans = [classical_embedding(ch) for ch in self.channels]
        return MarginalScenario(self.global_out, self.global_in, self.pairs, chans)

    def to_json(self):
        return {
            "kind": "classical",
            "global_out": self.global_out.to_json(),
            "global_in": self.global_in.to_json(),
            "channels": [ch.to_json() for ch in self.channels],
        }

    @classmethod
    def from_json(cls, data, tol: ToleranceConfig = DEFAULT_TOL) -> "ClassicalScenario":
        try:
            chans = [StochasticChannel.from_json(c, tol) for c in data["channels"]]
            if "global_out" in data:
                return cls(LabeledSpace.from_json(data["global_out"]),
                           LabeledSpace.from_json(data["global_in"]), chans)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed classical scenario JSON: {exc}") from exc
        return cls.from_channels(chans)


def _letters(labels, table):
    return "".join(table.setdefault(lab, ascii_letters[len(table)]) for lab in labels)


def _reduce(ch: StochasticChannel, out_labels, in_labels):
    """(residual, marginal tensor indexed [out_labels..., in_labels...])."""
    for labels, sp, what in ((out_labels, ch.out_space, "output"), (in_labels, ch.in_space, "input")):
        missing = [lab for lab in labels if lab not in sp]
        if missing:
            raise LabelMismatch(f"{what} labels {missing} not in {sp.labels}")
    table = {}
    src = _letters(ch.out_space.labels + ch.in_space.labels, table)
    kept_out = _letters(out_labels, table)
    all_in = _letters(ch.in_space.labels, table)
    t = np.einsum(f"{src}->{kept_out}{all_in}", ch.tensor())
    rest = [i for i, lab in enumerate(ch.in_space.labels) if lab not in in_labels]
    axes = tuple(len(out_labels) + i for i in rest)
    avg = t.mean(axis=axes, keepdims=True)
    residual = float(np.max(np.abs(t - avg), initial=0.0))
    avg = np.squeeze(avg, axis=axes) if axes else avg
    kept_in = "".join(table[lab] for lab in ch.in_space.labels if lab in in_labels)
    marg = np.einsum(f"{kept_out}{kept_in}->{kept_out}{_letters(in_labels, table)}", avg)
    return residual, marg


def classical_marginal(ch: StochasticChannel, pair, tol: ToleranceConfig = DEFAULT_TOL) -> StochasticChannel:
    """Marginal ``P_{X|X'}``; raises NotWellDefined if ``S'∖X'`` signals to ``X``."""
    if not isinstance(pair, OutputInputPair):
        pair = OutputInputPair(*pair)
    residual, marg = _reduce(ch, pair.out_labels, pair.in_labels)
    if residual > tol.tol_eq:
        raise NotWellDefined(f"no well-defined marginal for {pair}", residual)
    out_space = LabeledSpace((lab, ch.out_space.dim_of(lab)) for lab in pair.out_labels)
    in_space = LabeledSpace((lab, ch.in_space.dim_of(lab)) for lab in pair.in_labels)
    return StochasticChannel(in_space, out_space, marg.reshape(out_space.dim, in_space.dim), ch.tol)


def compose_chain(p1: StochasticChannel, p2: StochasticChannel,
                  tol: ToleranceConfig = DEFAULT_TOL) -> StochasticChannel:
    """``P_{ABC|XYZ} = P_{AB|XY} P_{BC|YZ} / P_{B|Y}`` with ``0/0 := 0``.

    The shared labels ``B|Y`` are the common output and input labels of the
    two channels.  Entries with ``P_{B|Y}(b|y) = 0`` vanish in both factors,
    so setting them to zero keeps every column normalized.
    """
    common_out = [lab for lab in p1.out_space.labels if lab in p2.out_space]
    common_in = [lab for lab in p1.in_space.labels if lab in p2.in_space]
    m1 = classical_marginal(p1, (common_out, common_in), tol)
    m2 = classical_marginal(p2, (common_out, common_in), tol)
    dev = float(np.max(np.abs(m1.matrix - m2.matrix), initial=0.0))
    if dev > tol.tol_eq:
        raise LocallyIncompatible(f"common marginals differ by {dev:.3e}")
    pb = (m1.matrix + m2.matrix) / 2
    inv = np.divide(1.0, pb, out=np.zeros_like(pb), where=pb > 0)
    out_space = _union([p1.out_space, p2.out_space])
    in_space = _union([p1.in_space, p2.in_space])
    table = {}
    s1 = _letters(p1.out_space.labels + p1.in_space.labels, table)
    s2 = _letters(p2.out_space.labels + p2.in_space.labels, table)
    sb = _letters(common_out + common_in, table)
    res = _letters(out_space.labels + in_space.labels, table)
    inv_t = inv.reshape(m1.out_space.dims + m1.in_space.dims)
    glob = np.einsum(f"{s1},{s2},{sb}->{res}", p1.tensor(), p2.tensor(), inv_t)
    return StochasticChannel(in_space, out_space, glob.reshape(out_space.dim, in_space.dim), p1.tol)


def classical_local_compatibility(scenario: ClassicalScenario,
                                  tol: ToleranceConfig = DEFAULT_TOL) -> LocalCompatibilityReport:
    """Pairwise agreement of the channels on their common labels."""
    report = LocalCompatibilityReport()
    for (i, ci), (j, cj) in combinations(enumerate(scenario.channels), 2):
        out_common = [lab for lab in ci.out_space.labels if lab in cj.out_space]
        in_common = [lab for lab in ci.in_space.labels if lab in cj.in_space]
        if not out_common and not in_common:
            continue
        report.checked += 1
        r1, m1 = _reduce(ci, out_common, in_common)
        r2, m2 = _reduce(cj, out_common, in_common)
        if max(r1, r2) > tol.tol_eq:
            report.failures.append((i, j, max(r1, r2)))
            continue
        dist = float(np.max(np.abs(m1 - m2), initial=0.0))
        if dist > tol.tol_eq:
            report.failures.append((i, j, dist))
    return report


def _marginal_rows(s_out: LabeledSpace, s_in: LabeledSpace, out_labels, in_labels, fixed_rest):
    """Rows mapping the global vector ``P[s, s']`` to ``sum_{s∖x} P(s | x', r')``.

    ``fixed_rest`` is a flat index into the inputs outside ``X'``; the rows are
    ordered by ``(x, x')`` in the label order given.
    """
    d_out, d_in = s_out.dim, s_in.dim
    out_idx = np.indices(s_out.dims).reshape(len(s_out), -1)
    in_idx = np.indices(s_in.dims).reshape(len(s_in), -1)
    x_pos = [s_out.index(lab) for lab in out_labels]
    xp_pos = [s_in.index(lab) for lab in in_labels]
    r_pos = [i for i in range(len(s_in)) if i not in xp_pos]
    x_dims = [s_out.dims[i] for i in x_pos]
    xp_dims = [s_in.dims[i] for i in xp_pos]
    r_dims = [s_in.dims[i] for i in r_pos]
    x_flat = np.ravel_multi_index(out_idx[x_pos], x_dims) if x_pos else np.zeros(d_out, dtype=int)
    xp_flat = np.ravel_multi_index(in_idx[xp_pos], xp_dims) if xp_pos else np.zeros(d_in, dtype=int)
    r_flat = np.ravel_multi_index(in_idx[r_pos], r_dims) if r_pos else np.zeros(d_in, dtype=int)
    n_x, n_xp = int(np.prod(x_dims)), int(np.prod(xp_dims))
    rows = np.zeros((n_x * n_xp, d_out * d_in))
    for s in range(d_out):
        for sp in np.nonzero(r_flat == fixed_rest)[0]:
            rows[x_flat[s] * n_xp + xp_flat[sp], s * d_in + sp] = 1.0
    return rows, int(np.prod(r_dims))


def classical_robustness(scenario: ClassicalScenario, opts: SolverOptions | None = None) -> float:
    """Largest ``λ`` such that ``λ P_k + (1 - λ) N_k`` is compatible for stochastic ``N_k``.

    Linear program over global conditional distributions: normalization per
    input, no-signaling from ``S'∖X'`` to ``X`` per pair and marginal
    ``≥ λ P_k`` entrywise.  Without explicit options the LP is solved to
    ``LP_TOL``.
    """
    if opts is None:
        opts = SolverOptions(tol_gap=LP_TOL, tol_feas=LP_TOL)
    s_out, s_in = scenario.global_out, scenario.global_in
    d_out, d_in = s_out.dim, s_in.dim
    pb = ProgramBuilder()
    glob = pb.add_block("p", d_out * d_in, "lp")
    n_slack = sum(ch.matrix.size for ch in scenario.channels)
    slack = pb.add_block("slack", n_slack, "lp")
    lam = pb.add_block("lambda", 2, "lp")
    norm = np.zeros((d_in, d_out * d_in))
    for sp in range(d_in):
        norm[sp, sp::d_in] = 1.0
    pb.add_constraints({glob: norm}, np.ones(d_in))
    offset = 0
    for ch in scenario.channels:
        out_labels, in_labels = ch.out_space.labels, ch.in_space.labels
        ref, n_rest = _marginal_rows(s_out, s_in, out_labels, in_labels, 0)
        for r in range(1, n_rest):
            other, _ = _marginal_rows(s_out, s_in, out_labels, in_labels, r)
            pb.add_constraints({glob: other - ref}, np.zeros(ref.shape[0]))
        target = ch.matrix.reshape(-1)
        k = target.size
        sl = np.zeros((k, n_slack))
        sl[np.arange(k), offset + np.arange(k)] = -1.0
        lam_rows = np.zeros((k, 2))
        lam_rows[:, 0] = -target
        pb.add_constraints({glob: ref, slack: sl, lam: lam_rows}, np.zeros(k))
        offset += k
    pb.add_constraint({lam: np.array([1.0, 1.0])}, 1.0)
    pb.set_objective({lam: np.array([1.0, 0.0])})
    sol = solve(pb.build(), opts)
    if not sol.optimal:
        raise SolverError(f"classical robustness LP ended with status {sol.status}")
    return float(np.clip(sol.primal_objective, 0.0, 1.0))


def pr_box(out_labels=("A", "B"), in_labels=("X", "Y")) -> StochasticChannel:
    """``P(ab|xy) = 1/2`` if ``a ⊕ b = xy``."""
    mat = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            for x in range(2):
                for y in range(2):
                    if a ^ b == x * y:
                        mat[2 * a + b, 2 * x + y] = 0.5
    return StochasticChannel(LabeledSpace((lab, 2) for lab in in_labels),
                             LabeledSpace((lab, 2) for lab in out_labels), mat)


def pr_box_scenario() -> ClassicalScenario:
    """Three PR boxes on ``AB|XY``, ``AC|XZ`` and ``BC|YZ``."""
    chans = [pr_box(("A", "B"), ("X", "Y")), pr_box(("A", "C"), ("X", "Z")), pr_box(("B", "C"), ("Y", "Z"))]
    return ClassicalScenario(LabeledSpace([("A", 2), ("B", 2), ("C", 2)]),
                             LabeledSpace([("X", 2), ("Y", 2), ("Z", 2)]), chans)
