"""Primal-dual interior-point method for block semidefinite programs.

Infeasible-start path following with the HKM search direction and Mehrotra
predictor-corrector steps.  The Schur complement is dense and assembled from
the sparse constraint rows, which suits the moderately sized, structured
programs built in this package.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack

from ..errors import InfeasibleLinearSystem, SolverError
from .program import ConicProgram, ConicSolution, Status

__all__ = ["SolverOptions", "solve", "presolve"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    schur_chunk: int = 256
    rank_tol: float = 1e-10

    def __post_init__(self):
        if self.tol_feas <= 0 or self.tol_gap <= 0 or self.max_iter < 1:
            raise ValueError("tolerances must be positive and max_iter >= 1")


# -- presolve -----------------------------------------------------------------


def _gram(coefs, blocks) -> np.ndarray:
    m = coefs[0].shape[0]
    g = np.zeros((m, m))
    for blk, a in zip(blocks, coefs):
        if a.nnz:
            g += np.real((a @ a.conj().T).toarray())
    return g


def presolve(prog: ConicProgram, rank_tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the constraints.

    Raises InfeasibleLinearSystem when a dependent constraint contradicts the
    ones it depends on.
    """
    rows = [c[1:] for c in prog.coef]
    g = _gram(rows, prog.blocks)
    norms = np.sqrt(np.clip(np.diag(g), 0, None))
    b = prog.b
    zero = norms <= 1e-14
    if np.any(np.abs(b[zero]) > 1e-12):
        raise InfeasibleLinearSystem("a constraint with zero coefficients has a nonzero right-hand side")
    live = np.flatnonzero(~zero)
    if live.size == 0:
        return live
    scale = 1 / norms[live]
    gn = g[np.ix_(live, live)] * scale[:, None] * scale[None, :]
    c, piv, rank, info = lapack.dpstrf(gn, lower=1, tol=rank_tol)
    if info < 0:
        raise SolverError("rank detection failed")
    piv = piv[:live.size] - 1
    keep = np.sort(live[piv[:rank]])
    drop = live[piv[rank:]]
    if drop.size:
        gkk = g[np.ix_(keep, keep)]
        coeffs = np.linalg.solve(gkk, g[np.ix_(keep, drop)])
        predicted = coeffs.T @ b[keep]
        bad = np.abs(predicted - b[drop]) > 1e-8 * (1 + np.abs(b[drop]))
        if np.any(bad):
            raise InfeasibleLinearSystem(
                f"{int(bad.sum())} dependent equality constraints are inconsistent")
        log.debug("presolve removed %d dependent constraints", drop.size)
    return keep


# -- block helpers ------------------------------------------------------------


class _Problem:
    """Constraint data restricted to the rows kept by presolve."""

    def __init__(self, prog: ConicProgram, keep: np.ndarray):
        self.blocks = prog.blocks
        self.b = prog.b[keep]
        self.m = keep.size
        self.A = [c[1:][keep].tocsr() for c in prog.coef]
        self.C = []
        for blk, c in zip(self.blocks, prog.coef):
            row = c[0].toarray().ravel()
            self.C.append(row.reshape(blk.size, blk.size) if blk.is_matrix else row.real.copy())
        self.AT = [a.T.tocsr() for a in self.A]
        # real split [Re A, Im A] so the Schur product runs on real data
        self.A_split = [sp.hstack([a.real, a.imag]).tocsr() if blk.kind == "herm" else a.real.tocsr()
                        for blk, a in zip(self.blocks, self.A)]
        # padded (row, col, value) triplets per constraint for the Schur kernel
        self.triplets = []
        for blk, a in zip(self.blocks, self.A):
            if not blk.is_matrix or a.nnz == 0:
                self.triplets.append(None)
                continue
            n = blk.size
            counts = np.diff(a.indptr)
            rows_nz = np.flatnonzero(counts)
            kmax = counts.max()
            P = np.zeros((rows_nz.size, kmax), dtype=np.int64)
            Q = np.zeros((rows_nz.size, kmax), dtype=np.int64)
            V = np.zeros((rows_nz.size, kmax), dtype=a.dtype)
            for t, i in enumerate(rows_nz):
                lo, hi = a.indptr[i], a.indptr[i + 1]
                idx = a.indices[lo:hi]
                P[t, :hi - lo] = idx // n
                Q[t, :hi - lo] = idx % n
                V[t, :hi - lo] = a.data[lo:hi]
            self.triplets.append((rows_nz, P, Q, V))
        self.n_barrier = sum(blk.size for blk in self.blocks)

    def apply(self, xs) -> np.ndarray:
        """``A(X)_i = sum_k Re tr(A_ik X_k)``; accepts non-Hermitian matrices."""
        out = np.zeros(self.m)
        for blk, a, x in zip(self.blocks, self.A, xs):
            if a.nnz == 0:
                continue
            if blk.is_matrix:
                out += np.real(a @ np.conj(x).ravel())
            else:
                out += np.real(a @ x)
        return out

    def adjoint(self, y) -> list:
        res = []
        for blk, at in zip(self.blocks, self.AT):
            v = at @ y
            if blk.is_matrix:
                mat = np.asarray(v).reshape(blk.size, blk.size)
                res.append((mat + mat.conj().T) / 2)
            else:
                res.append(np.real(v))
        return res

    def schur(self, xs, zinvs, chunk: int) -> np.ndarray:
        m = self.m
        mat = np.zeros((m, m))
        for blk, a, a_split, trip, x, zi in zip(self.blocks, self.A, self.A_split, self.triplets, xs, zinvs):
            if a.nnz == 0:
                continue
            if not blk.is_matrix:
                d = x * zi
                mat += np.real((a @ sp.diags(d) @ a.T).toarray())
                continue
            rows_nz, P, Q, V = trip
            n = blk.size
            for lo in range(0, rows_nz.size, chunk):
                hi = min(lo + chunk, rows_nz.size)
                # F_j = Zinv A_j X = sum_t v_t Zinv[:, p_t] X[q_t, :]
                left = zi[:, P[lo:hi]].transpose(1, 0, 2) * V[lo:hi, None, :]
                right = x[Q[lo:hi], :]
                f = np.matmul(left, right).reshape(hi - lo, n * n)
                if blk.kind == "herm":
                    # Re(A conj(F)) = Re A Re F + Im A Im F
                    dense = np.empty((2 * n * n, hi - lo))
                    dense[:n * n] = f.real.T
                    dense[n * n:] = f.imag.T
                else:
                    dense = np.ascontiguousarray(f.T)
                mat[:, rows_nz[lo:hi]] += a_split @ dense
        return (mat + mat.T) / 2


def _inner(blk, a, b) -> float:
    if blk.is_matrix:
        return float(np.real(np.vdot(b, a)))
    return float(np.dot(a, b))


def _sym(a):
    return (a + a.conj().T) / 2


def _max_step(blk, x, dx) -> float:
    """Largest ``alpha`` with ``x + alpha dx`` PSD (``inf`` if unbounded)."""
    if not blk.is_matrix:
        neg = dx < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-x[neg] / dx[neg]))
    try:
        low = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    w = sla.solve_triangular(low, dx, lower=True)
    w = sla.solve_triangular(low, w.conj().T, lower=True)
    lam = np.linalg.eigvalsh(_sym(w))[0]
    return np.inf if lam >= 0 else float(-1 / lam)


def _inverse(blk, z):
    if not blk.is_matrix:
        return 1 / z
    low = np.linalg.cholesky(z)
    li = sla.solve_triangular(low, np.eye(z.shape[0], dtype=z.dtype), lower=True)
    return li.conj().T @ li


# -- main loop ----------------------------------------------------------------


def _initial_point(pb: _Problem):
    """Identity-scaled start in the style of SDPT3."""
    xs, zs = [], []
    bmax = np.max(np.abs(pb.b), initial=0.0)
    big_m = 10 * (1 + bmax)
    for blk, a, c in zip(pb.blocks, pb.A, pb.C):
        n = blk.size
        row_norms = np.sqrt(np.asarray(np.real(a.multiply(a.conj()).sum(axis=1))).ravel())
        live = row_norms > 0
        if np.any(live):
            xi = np.max(n * (1 + np.abs(pb.b[live])) / (1 + row_norms[live]))
        else:
            xi = 1.0
        xi = max(big_m, np.sqrt(n), xi)
        cnorm = np.linalg.norm(c)
        eta = max(big_m, np.sqrt(n), cnorm, np.max(row_norms, initial=0.0))
        if blk.is_matrix:
            xs.append(xi * np.eye(n, dtype=blk.dtype))
            zs.append(eta * np.eye(n, dtype=blk.dtype))
        else:
            xs.append(np.full(n, xi))
            zs.append(np.full(n, eta))
    return xs, np.zeros(pb.m), zs


def solve(prog: ConicProgram, opts: SolverOptions | None = None, **kwargs) -> ConicSolution:
    """Solve ``prog``; keyword arguments override fields of ``opts``."""
    if opts is None:
        opts = SolverOptions(**kwargs)
    elif kwargs:
        opts = SolverOptions(**{**opts.__dict__, **kwargs})
    keep = presolve(prog, opts.rank_tol)
    pb = _Problem(prog, keep)
    blocks = pb.blocks
    xs, y, zs = _initial_point(pb)
    bnorm = np.linalg.norm(pb.b)
    cnorm = np.sqrt(sum(np.linalg.norm(c) ** 2 for c in pb.C))
    status = Status.MAX_ITERATIONS
    history = []
    it = 0
    pinf = dinf = gap = np.inf
    pobj = dobj = 0.0

    def measures(xs, y, zs):
        rp = pb.b - pb.apply(xs)
        aty = pb.adjoint(y)
        rd = [c - a + z for c, a, z in zip(pb.C, aty, zs)]
        pobj = sum(_inner(blk, c, x) for blk, c, x in zip(blocks, pb.C, xs))
        dobj = float(pb.b @ y)
        pinf = np.linalg.norm(rp) / (1 + bnorm)
        dinf = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd)) / (1 + cnorm)
        gap = abs(pobj - dobj) / (1 + abs(pobj))
        return rp, rd, pobj, dobj, pinf, dinf, gap

    for it in range(opts.max_iter + 1):
        rp, rd, pobj, dobj, pinf, dinf, gap = measures(xs, y, zs)
        mu = sum(_inner(blk, x, z) for blk, x, z in zip(blocks, xs, zs)) / pb.n_barrier
        history.append((pobj, dobj, pinf, dinf, gap))
        log.debug("it %3d  p %.9e  d %.9e  pinf %.1e  dinf %.1e  gap %.1e",
                  it, pobj, dobj, pinf, dinf, gap)
        if pinf <= opts.tol_feas and dinf <= opts.tol_feas and gap <= opts.tol_gap:
            status = Status.OPTIMAL
            break
        if it == opts.max_iter:
            break
        try:
            zinvs = [_inverse(blk, z) for blk, z in zip(blocks, zs)]
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_FAILURE
            break
        schur = pb.schur(xs, zinvs, opts.schur_chunk)
        factor = None
        reg = 0.0
        diag_max = np.max(np.abs(np.diag(schur)), initial=1.0)
        for attempt in range(6):
            try:
                factor = sla.cho_factor(schur + reg * np.eye(pb.m), lower=False, check_finite=False)
                break
            except (np.linalg.LinAlgError, ValueError):
                reg = diag_max * (1e-14 * 100 ** attempt)
        if factor is None:
            status = Status.NUMERICAL_FAILURE
            break
        # X Rd Zinv part of the right-hand side is shared by both steps
        xrdz = [x @ r @ zi if blk.is_matrix else x * r * zi
                for blk, x, r, zi in zip(blocks, xs, rd, zinvs)]

        def direction(rc):
            rhs = pb.apply(rc) + pb.apply(xrdz) - rp
            dy = sla.cho_solve(factor, rhs, check_finite=False)
            atdy = pb.adjoint(dy)
            dzs = [a - r for a, r in zip(atdy, rd)]
            dxs = []
            for blk, x, dz, zi, c in zip(blocks, xs, dzs, zinvs, rc):
                if blk.is_matrix:
                    dxs.append(c - _sym(x @ dz @ zi))
                else:
                    dxs.append(c - x * dz * zi)
            return dxs, dy, dzs

        def steps(dxs, dzs):
            ap = min(_max_step(blk, x, dx) for blk, x, dx in zip(blocks, xs, dxs))
            ad = min(_max_step(blk, z, dz) for blk, z, dz in zip(blocks, zs, dzs))
            return ap, ad

        # predictor
        rc = [-x for x in xs]
        dxs, dy, dzs = direction(rc)
        ap, ad = steps(dxs, dzs)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(_inner(blk, x + ap * dx, z + ad * dz)
                     for blk, x, dx, z, dz in zip(blocks, xs, dxs, zs, dzs)) / pb.n_barrier
        expon = max(1.0, 3 * min(ap, ad) ** 2)
        sigma = min(1.0, max(0.0, mu_aff / mu) ** expon)
        # corrector
        rc = []
        for blk, x, dx, dz, zi in zip(blocks, xs, dxs, dzs, zinvs):
            if blk.is_matrix:
                rc.append(sigma * mu * zi - x - _sym(dx @ dz @ zi))
            else:
                rc.append(sigma * mu * zi - x - dx * dz * zi)
        dxs, dy, dzs = direction(rc)
        ap, ad = steps(dxs, dzs)
        tau = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, tau * ap), min(1.0, tau * ad)
        if ap < 1e-10 and ad < 1e-10:
            status = Status.NUMERICAL_FAILURE
            break
        xs = [x + ap * dx for x, dx in zip(xs, dxs)]
        zs = [z + ad * dz for z, dz in zip(zs, dzs)]
        y = y + ad * dy
        xs = [_sym(x) if blk.is_matrix else x for blk, x in zip(blocks, xs)]
        zs = [_sym(z) if blk.is_matrix else z for blk, z in zip(blocks, zs)]

    y_full = np.zeros(prog.m)
    y_full[keep] = y
    return ConicSolution(
        status=status,
        x=xs,
        y=y_full,
        z=zs,
        primal_objective=float(pobj),
        dual_objective=float(dobj),
        gap=float(gap),
        primal_infeasibility=float(pinf),
        dual_infeasibility=float(dinf),
        iterations=it,
        history=history,
    )
