"""Reader and writer for the SDPA sparse format (``.dat-s``).

The file describes

    maximize <F0, Y>  subject to  <F_i, Y> = c_i,  Y ⪰ 0,

which is exactly the primal of ConicProgram with ``F0 = C``, ``F_i = A_i``
and ``c = b``.  Hermitian blocks are written in the real embedding
``H -> [[Re H, -Im H], [Im H, Re H]] / 2`` so that pairings are unchanged
when the variable is embedded the same way (without the factor 1/2).
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import ParseError
from .program import Block, ConicProgram

__all__ = ["export_sdpa", "import_sdpa", "realify_program", "write_sdpa", "parse_sdpa"]

_SEP = re.compile(r"[,{}()\s]+")


def _realify_rows(mat: sp.csr_matrix, n: int) -> sp.csr_matrix:
    coo = mat.tocoo()
    p, q = coo.col // n, coo.col % n
    re_, im = coo.data.real / 2, coo.data.imag / 2
    rows = np.concatenate([coo.row] * 4)
    pp = np.concatenate([p, p + n, p + n, p])
    qq = np.concatenate([q, q + n, q, q + n])
    vals = np.concatenate([re_, re_, im, -im])
    out = sp.csr_matrix((vals, (rows, pp * 2 * n + qq)), shape=(mat.shape[0], 4 * n * n))
    out.eliminate_zeros()
    return out


def realify_program(prog: ConicProgram) -> ConicProgram:
    """Real symmetric program with the same optimal value."""
    blocks, coefs = [], []
    for blk, mat in zip(prog.blocks, prog.coef):
        if blk.kind == "herm":
            blocks.append(Block(blk.name, 2 * blk.size, "sym"))
            coefs.append(_realify_rows(mat, blk.size))
        else:
            blocks.append(blk)
            coefs.append(sp.csr_matrix(mat.real))
    return ConicProgram(blocks, coefs, prog.b.copy())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_sdpa(prog: ConicProgram) -> str:
    prog = realify_program(prog)
    lines = [f'"conic program: {len(prog.blocks)} blocks, {prog.m} constraints',
             str(prog.m), str(len(prog.blocks))]
    lines.append(" ".join(str(b.size if b.is_matrix else -b.size) for b in prog.blocks))
    lines.append(" ".join(_fmt(v) for v in prog.b) if prog.m else "")
    entries = []
    for k, (blk, mat) in enumerate(zip(prog.blocks, prog.coef)):
        coo = mat.tocoo()
        if blk.is_matrix:
            i, j = coo.col // blk.size, coo.col % blk.size
            sel = i <= j
        else:
            i = j = coo.col
            sel = np.ones(coo.nnz, dtype=bool)
        for row, a, c, v in zip(coo.row[sel], i[sel], j[sel], coo.data[sel]):
            entries.append((int(row), k + 1, int(a) + 1, int(c) + 1, float(np.real(v))))
    entries.sort()
    lines.extend(f"{r} {k} {a} {c} {_fmt(v)}" for r, k, a, c, v in entries if v != 0)
    return "\n".join(lines) + "\n"


def export_sdpa(prog: ConicProgram, path) -> None:
    Path(path).write_text(write_sdpa(prog))


def _tokens(line: str):
    return [t for t in _SEP.split(line.strip()) if t]


def parse_sdpa(text: str) -> ConicProgram:
    """Parse SDPA sparse text; lower-triangle entries are accepted as their mirror."""
    content = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in '"*':
            continue
        content.append((lineno, line))
    pos = 0

    def next_line(what):
        nonlocal pos
        if pos >= len(content):
            raise ParseError(f"unexpected end of file while reading {what}", content[-1][0] if content else 0)
        item = content[pos]
        pos += 1
        return item

    def read_ints(count, what):
        vals = []
        lineno = 0
        while len(vals) < count:
            lineno, line = next_line(what)
            for tok in _tokens(line):
                try:
                    vals.append(int(float(tok)) if float(tok).is_integer() else None)
                except ValueError:
                    raise ParseError(f"bad integer {tok!r} in {what}", lineno) from None
                if vals[-1] is None:
                    raise ParseError(f"bad integer {tok!r} in {what}", lineno)
                if len(vals) == count:
                    break
        return vals, lineno

    (m,), ln = read_ints(1, "constraint count")
    if m < 0:
        raise ParseError("negative constraint count", ln)
    (nblocks,), ln = read_ints(1, "block count")
    if nblocks < 1:
        raise ParseError("block count must be positive", ln)
    sizes, ln = read_ints(nblocks, "block structure")
    if any(s == 0 for s in sizes):
        raise ParseError("zero block size", ln)
    blocks = [Block(f"b{k + 1}", abs(s), "sym" if s > 0 else "lp") for k, s in enumerate(sizes)]
    b = []
    while len(b) < m:
        lineno, line = next_line("objective vector")
        for tok in _tokens(line):
            try:
                b.append(float(tok))
            except ValueError:
                raise ParseError(f"bad number {tok!r} in objective vector", lineno) from None
            if len(b) == m:
                break
    seen = {}
    data = [([], [], []) for _ in blocks]
    while pos < len(content):
        lineno, line = next_line("entries")
        toks = _tokens(line)
        if len(toks) != 5:
            raise ParseError(f"expected 5 fields, got {len(toks)}", lineno)
        try:
            matno, blkno, i, j = (int(t) for t in toks[:4])
            val = float(toks[4])
        except ValueError:
            raise ParseError(f"malformed entry {line!r}", lineno) from None
        if not 0 <= matno <= m:
            raise ParseError(f"matrix number {matno} out of range", lineno)
        if not 1 <= blkno <= nblocks:
            raise ParseError(f"block number {blkno} out of range", lineno)
        blk = blocks[blkno - 1]
        if not (1 <= i <= blk.size and 1 <= j <= blk.size):
            raise ParseError(f"index ({i}, {j}) outside block of size {blk.size}", lineno)
        if not blk.is_matrix and i != j:
            raise ParseError("off-diagonal entry in a diagonal block", lineno)
        if not np.isfinite(val):
            raise ParseError("non-finite coefficient", lineno)
        key = (matno, blkno, i, j)
        mirror = (matno, blkno, j, i)
        if key in seen and seen[key] != val:
            raise ParseError(f"conflicting values for entry ({i}, {j})", lineno)
        if i != j and mirror in seen and seen[mirror] != val:
            raise ParseError(f"conflicting values for entry ({i}, {j})", lineno)
        if key in seen or (i != j and mirror in seen):
            continue
        seen[key] = val
        rows, cols, vals = data[blkno - 1]
        a, c = min(i, j) - 1, max(i, j) - 1
        if blk.is_matrix:
            rows.append(matno)
            cols.append(a * blk.size + c)
            vals.append(val)
            if a != c:
                rows.append(matno)
                cols.append(c * blk.size + a)
                vals.append(val)
        else:
            rows.append(matno)
            cols.append(a)
            vals.append(val)
    coefs = [sp.csr_matrix((v, (r, c)), shape=(m + 1, blk.width), dtype=float)
             for blk, (r, c, v) in zip(blocks, data)]
    return ConicProgram(blocks, coefs, np.array(b))


def import_sdpa(path) -> ConicProgram:
    return parse_sdpa(Path(path).read_text())
