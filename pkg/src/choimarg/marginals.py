"""Marginal channels, no-signaling checks and scenario construction."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .channels import QuantumChannel, primed
from .errors import (
    InvalidScenario,
    LabelCollision,
    LabelMismatch,
    LabelNotFound,
    NotWellDefined,
    ValidationError,
)
from .tensor_core import (
    DEFAULT_TOL,
    LabeledSpace,
    ToleranceConfig,
    embed_identity,
    permute_array,
    ptrace_array,
)

__all__ = [
    "OutputInputPair",
    "MarginalScenario",
    "LocalCompatibilityReport",
    "signaling_residual",
    "marginal_channel",
    "is_no_signaling",
    "local_compatibility_check",
    "broadcast_scenario",
    "extendibility_scenario",
    "product_channel",
]


@dataclass(frozen=True)
class OutputInputPair:
    """An output-input pair ``X|X'``; labels are kept in the given order."""

    out_labels: tuple
    in_labels: tuple

    def __init__(self, out_labels: Sequence[str] = (), in_labels: Sequence[str] = ()):
        out_labels, in_labels = tuple(out_labels), tuple(in_labels)
        if not out_labels and not in_labels:
            raise ValidationError("an output-input pair needs at least one label")
        if len(set(out_labels)) != len(out_labels) or len(set(in_labels)) != len(in_labels):
            raise LabelCollision("repeated label inside an output-input pair")
        object.__setattr__(self, "out_labels", out_labels)
        object.__setattr__(self, "in_labels", in_labels)

    @property
    def key(self):
        return frozenset(self.out_labels), frozenset(self.in_labels)

    def __str__(self):
        return f"{''.join(self.out_labels) or '-'}|{''.join(self.in_labels) or '-'}"

    @classmethod
    def of(cls, channel: QuantumChannel) -> "OutputInputPair":
        return cls(channel.out_space.labels, channel.in_space.labels)


def _check_labels(space: LabeledSpace, labels, what: str):
    missing = [lab for lab in labels if lab not in space]
    if missing:
        raise LabelNotFound(f"{what} labels {missing} not in {space.labels}")


@dataclass(frozen=True, eq=False)
class MarginalScenario:
    """A channel marginal problem: global spaces ``S``, ``S'`` and local channels on pairs."""

    global_out: LabeledSpace
    global_in: LabeledSpace
    pairs: tuple
    channels: tuple

    def __init__(self, global_out: LabeledSpace, global_in: LabeledSpace,
                 pairs: Sequence[OutputInputPair], channels: Sequence[QuantumChannel]):
        pairs, channels = tuple(pairs), tuple(channels)
        if len(pairs) != len(channels):
            raise InvalidScenario("one channel per pair is required")
        if not pairs:
            raise InvalidScenario("a scenario needs at least one pair")
        clash = set(global_out.labels) & set(global_in.labels)
        if clash:
            raise InvalidScenario(f"labels {sorted(clash)} used for both outputs and inputs")
        seen = set()
        for pair, ch in zip(pairs, channels):
            if pair.key in seen:
                raise InvalidScenario(f"pair {pair} appears more than once")
            seen.add(pair.key)
            _check_labels(global_out, pair.out_labels, "output")
            _check_labels(global_in, pair.in_labels, "input")
            for sp, labels, glob in ((ch.out_space, pair.out_labels, global_out),
                                     (ch.in_space, pair.in_labels, global_in)):
                if set(sp.labels) != set(labels):
                    raise LabelMismatch(f"channel on {sp.labels} does not match pair {pair}")
                for lab, d in sp.factors:
                    if glob.dim_of(lab) != d:
                        raise LabelMismatch(f"dimension of {lab!r} differs from the global space")
        object.__setattr__(self, "global_out", global_out)
        object.__setattr__(self, "global_in", global_in)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_channels(cls, channels: Sequence[QuantumChannel], global_out=None, global_in=None):
        """Scenario whose pairs are read off the channels' own labels.

        Global spaces default to the union of all labels in first-seen order.
        """
        def union(spaces):
            facs = {}
            for sp in spaces:
                for lab, d in sp.factors:
                    if facs.setdefault(lab, d) != d:
                        raise InvalidScenario(f"label {lab!r} used with two dimensions")
            return LabeledSpace(facs.items())

        if global_out is None:
            global_out = union(ch.out_space for ch in channels)
        if global_in is None:
            global_in = union(ch.in_space for ch in channels)
        return cls(global_out, global_in, [OutputInputPair.of(ch) for ch in channels], channels)

    @property
    def global_space(self) -> LabeledSpace:
        return self.global_out + self.global_in

    def to_json(self):
        return {
            "global_out": self.global_out.to_json(),
            "global_in": self.global_in.to_json(),
            "pairs": [
                {"out": list(p.out_labels), "in": list(p.in_labels), "channel": ch.to_json()}
                for p, ch in zip(self.pairs, self.channels)
            ],
        }

    @classmethod
    def from_json(cls, data, tol: ToleranceConfig = DEFAULT_TOL) -> "MarginalScenario":
        try:
            out = LabeledSpace.from_json(data["global_out"])
            inn = LabeledSpace.from_json(data["global_in"])
            pairs, chans = [], []
            for entry in data["pairs"]:
                pairs.append(OutputInputPair(entry["out"], entry["in"]))
                chans.append(QuantumChannel.from_json(entry["channel"], tol))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scenario JSON: {exc}") from exc
        return cls(out, inn, pairs, chans)


# -- marginals ----------------------------------------------------------------


def _pair_reduction(global_ch: QuantumChannel, pair: OutputInputPair, tol: ToleranceConfig):
    """Return (residual, marginal Choi on X ⊗ X') for ``pair``."""
    if not isinstance(pair, OutputInputPair):
        pair = OutputInputPair(*pair)
    for labels, sp, what in ((pair.out_labels, global_ch.out_space, "output"),
                             (pair.in_labels, global_ch.in_space, "input")):
        missing = [lab for lab in labels if lab not in sp]
        if missing:
            raise LabelMismatch(f"{what} labels {missing} not in {sp.labels}")
    space = global_ch.space
    n_out = len(global_ch.out_space)
    # T = tr_{S\X}(J), kept factors: X then all of S' (space order)
    keep_t = [i for i, lab in enumerate(space.labels)
              if (i < n_out and lab in pair.out_labels) or i >= n_out]
    t_mat = ptrace_array(global_ch.matrix, space.dims, keep_t)
    t_space = LabeledSpace(space.factors[i] for i in keep_t)
    rest_in = [lab for lab in global_ch.in_space.labels if lab not in pair.in_labels]
    keep_m = [i for i, lab in enumerate(t_space.labels) if lab not in rest_in]
    marg = ptrace_array(t_mat, t_space.dims, keep_m)
    marg_space = LabeledSpace(t_space.factors[i] for i in keep_m)
    rebuilt = embed_identity(marg, t_space, marg_space.labels, normalized=True)
    residual = float(np.linalg.norm(t_mat - rebuilt))
    # reorder the marginal Choi to the pair's label order
    order = list(pair.out_labels) + list(pair.in_labels)
    perm = [marg_space.index(lab) for lab in order]
    marg = permute_array(marg, marg_space.dims, perm)
    return residual, t_space.dim, marg


def signaling_residual(global_ch: QuantumChannel, pair, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """Frobenius norm of ``T - tr_{S'∖X'}(T) ⊗ I/d`` with ``T = tr_{S∖X}(J)``."""
    return _pair_reduction(global_ch, pair, tol)[0]


def _threshold(dim: int, tol: ToleranceConfig) -> float:
    return tol.tol_eq * dim


def is_no_signaling(global_ch: QuantumChannel, pair, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    residual, dim, _ = _pair_reduction(global_ch, pair, tol)
    return residual <= _threshold(dim, tol)


def marginal_channel(global_ch: QuantumChannel, pair, tol: ToleranceConfig = DEFAULT_TOL) -> QuantumChannel:
    """Reduced channel ``X' -> X`` of ``global_ch``.

    Raises NotWellDefined when the global channel signals from ``S'∖X'`` to ``X``.
    """
    if not isinstance(pair, OutputInputPair):
        pair = OutputInputPair(*pair)
    residual, dim, marg = _pair_reduction(global_ch, pair, tol)
    if residual > _threshold(dim, tol):
        raise NotWellDefined(f"no well-defined marginal for {pair}", residual)
    in_space = LabeledSpace((lab, global_ch.in_space.dim_of(lab)) for lab in pair.in_labels)
    out_space = LabeledSpace((lab, global_ch.out_space.dim_of(lab)) for lab in pair.out_labels)
    return QuantumChannel.from_matrix(in_space, out_space, marg, global_ch.tol)


# -- local compatibility ------------------------------------------------------


@dataclass
class LocalCompatibilityReport:
    """Outcome of the pairwise overlap check; failures are ``(i, j, residual)``."""

    failures: list = field(default_factory=list)
    checked: int = 0

    @property
    def compatible(self) -> bool:
        return not self.failures

    def __bool__(self):
        return self.compatible


def _trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


def local_compatibility_check(scenario: MarginalScenario,
                              tol: ToleranceConfig = DEFAULT_TOL) -> LocalCompatibilityReport:
    """Compare the reductions of every two channels onto their common labels.

    A failing reduction (signaling into the overlap) is reported with its
    factorization residual; mismatching overlaps with the trace distance of
    the two reduced Choi operators.
    """
    report = LocalCompatibilityReport()
    for (i, pi), (j, pj) in combinations(enumerate(scenario.pairs), 2):
        out_common = [lab for lab in pi.out_labels if lab in pj.out_labels]
        in_common = [lab for lab in pi.in_labels if lab in pj.in_labels]
        if not out_common and not in_common:
            continue
        report.checked += 1
        overlap = OutputInputPair(out_common, in_common)
        reduced = []
        for ch in (scenario.channels[i], scenario.channels[j]):
            res, dim, marg = _pair_reduction(ch, overlap, tol)
            if res > _threshold(dim, tol):
                report.failures.append((i, j, res))
                break
            reduced.append(marg)
        else:
            dist = _trace_distance(*reduced)
            if dist > tol.tol_eq:
                report.failures.append((i, j, dist))
    return report


# -- scenario constructors ----------------------------------------------------


def broadcast_scenario(channels: Sequence[QuantumChannel]) -> MarginalScenario:
    """All channels act on the same input ``S'``; outputs must be disjoint."""
    if not channels:
        raise InvalidScenario("need at least one channel")
    s_in = channels[0].in_space
    for ch in channels[1:]:
        if ch.in_space != s_in:
            raise InvalidScenario("broadcast channels must share the same input space")
    facs = []
    for ch in channels:
        facs.extend(ch.out_space.factors)
    try:
        s_out = LabeledSpace(facs)
    except LabelCollision as exc:
        raise InvalidScenario(f"broadcast outputs overlap: {exc}") from exc
    return MarginalScenario(s_out, s_in, [OutputInputPair.of(ch) for ch in channels], channels)


def extendibility_scenario(ch: QuantumChannel, k: int = 2, shared: str | None = None) -> MarginalScenario:
    """k-extension scenario of a bipartite channel ``X'B' -> XB``.

    The factor ``shared`` (default: the last output factor) and its input are
    common to all pairs; the other output/input factor is copied ``k`` times
    under the labels ``X1..Xk`` (``X1'..Xk'``).
    """
    if k < 2:
        raise InvalidScenario("extendibility needs k >= 2")
    if len(ch.out_space) != 2 or len(ch.in_space) != 2:
        raise InvalidScenario("extendibility needs a channel with two output and two input factors")
    if shared is None:
        shared = ch.out_space.labels[1]
    if shared not in ch.out_space or primed(shared) not in ch.in_space:
        raise InvalidScenario(f"shared system {shared!r} must appear as output and primed input")
    (copied,) = [lab for lab in ch.out_space.labels if lab != shared]
    if primed(copied) not in ch.in_space:
        raise InvalidScenario(f"input of {copied!r} must be labeled {primed(copied)!r}")
    dx, db = ch.out_space.dim_of(copied), ch.out_space.dim_of(shared)
    dxi, dbi = ch.in_space.dim_of(primed(copied)), ch.in_space.dim_of(primed(shared))
    names = [f"{copied}{i + 1}" for i in range(k)]
    chans = [ch.relabel({copied: n, primed(copied): primed(n)}) for n in names]
    s_out = LabeledSpace([(n, dx) for n in names] + [(shared, db)])
    s_in = LabeledSpace([(primed(n), dxi) for n in names] + [(primed(shared), dbi)])
    return MarginalScenario(s_out, s_in, [OutputInputPair.of(c) for c in chans], chans)


def product_channel(channels: Sequence[QuantumChannel]) -> QuantumChannel:
    """Tensor product of channels acting on disjoint systems."""
    out_facs, in_facs = [], []
    mat = np.ones((1, 1), dtype=complex)
    dims = []
    for ch in channels:
        out_facs.extend(ch.out_space.factors)
        in_facs.extend(ch.in_space.factors)
        mat = np.kron(mat, ch.matrix)
        dims.append((len(ch.out_space), len(ch.in_space)))
    out_space, in_space = LabeledSpace(out_facs), LabeledSpace(in_facs)
    # factors are currently (out_1 in_1 out_2 in_2 ...); move to (outs, ins)
    order_now = []
    for ch in channels:
        order_now.extend(ch.out_space.labels + ch.in_space.labels)
    now_space = LabeledSpace((lab, (out_space + in_space).dim_of(lab)) for lab in order_now)
    perm = [now_space.index(lab) for lab in (out_space + in_space).labels]
    return QuantumChannel.from_matrix(in_space, out_space, permute_array(mat, now_space.dims, perm))
