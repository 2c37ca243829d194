"""Sparse SDPA (.dat-s) reader and writer.

The file encodes ``maximise F0 . X  s.t.  Fi . X = c_i, X >= 0`` over real
symmetric blocks.  See docs/sdpa_format.md for the byte-level layout.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .problem import Block, Constraint, LinearForm, SdpProblem

_NAMES_TAG = "* switchcert-blocks: "
_SENSE_TAG = "* switchcert-sense: "
_SEPARATORS = re.compile(r"[,{}()]")


class SdpaParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(problem: SdpProblem, path) -> str:
    """Write ``problem`` (real blocks, no free scalars) to ``path``; returns the text."""
    problem.validate()
    if any(b.complex for b in problem.blocks):
        raise ValueError("export_sdpa needs real blocks; apply embed_complex first")
    if problem.free_scalars:
        raise ValueError("export_sdpa needs free scalars split into PSD blocks; apply standardize first")
    sign = 1.0 if problem.sense == "max" else -1.0
    index = {b.name: k + 1 for k, b in enumerate(problem.blocks)}
    lines = [
        '"switchcert SDPA sparse export',
        _NAMES_TAG + json.dumps([b.name for b in problem.blocks]),
        _SENSE_TAG + problem.sense,
        str(len(problem.constraints)),
        str(len(problem.blocks)),
        " ".join(str(b.dim) for b in problem.blocks) if problem.blocks else "",
        " ".join(_fmt(c.rhs) for c in problem.constraints),
    ]

    def entries(matno: int, form: LinearForm, scale: float):
        for b in problem.blocks:
            if b.name not in form.coeffs:
                continue
            m = np.asarray(form.coeffs[b.name], dtype=float)
            for i, j in zip(*np.triu_indices(b.dim)):
                v = scale * m[i, j]
                if v != 0.0:
                    lines.append(f"{matno} {index[b.name]} {i + 1} {j + 1} {_fmt(v)}")

    entries(0, problem.objective, sign)
    for k, con in enumerate(problem.constraints, start=1):
        entries(k, con, 1.0)
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    return text


def import_sdpa(path) -> SdpProblem:
    """Parse a sparse SDPA file.

    Diagonal (negative-size) blocks become runs of 1x1 blocks.  Block names
    and optimisation sense are restored when the file was written by
    ``export_sdpa``.
    """
    text = Path(path).read_text()
    names = None
    sense = "max"
    lines: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith(_NAMES_TAG):
            try:
                names = json.loads(raw[len(_NAMES_TAG):])
            except json.JSONDecodeError as exc:
                raise SdpaParseError(lineno, f"bad block-name comment: {exc}") from None
            continue
        if raw.startswith(_SENSE_TAG):
            sense = raw[len(_SENSE_TAG):].strip()
            if sense not in ("max", "min"):
                raise SdpaParseError(lineno, f"bad sense {sense!r}")
            continue
        if raw.startswith(('"', "*")):
            continue
        tokens = _SEPARATORS.sub(" ", raw).split()
        if tokens:
            lines.append((lineno, tokens))

    if len(lines) < 3:
        raise SdpaParseError(len(text.splitlines()), "truncated header")
    m = _int(lines[0], 0)
    nblock = _int(lines[1], 0)
    struct_line, struct = lines[2]
    if len(struct) < nblock:
        raise SdpaParseError(struct_line, f"expected {nblock} block sizes, got {len(struct)}")
    sizes = [_int((struct_line, struct), k) for k in range(nblock)]
    if m > 0:
        if len(lines) < 4:
            raise SdpaParseError(struct_line, "missing constraint vector")
        c_line, c_tokens = lines[3]
        body = lines[4:]
    else:
        # with m = 0 the constraint vector is empty
        c_line, c_tokens = struct_line, []
        body = lines[3:]
    if len(c_tokens) < m:
        raise SdpaParseError(c_line, f"expected {m} constraint values, got {len(c_tokens)}")
    rhs = [_float((c_line, c_tokens), k) for k in range(m)]

    # expand block structure
    blocks: list[Block] = []
    locate = {}  # (blkno, i) -> (block index, row offset); dense blocks use offset None
    for k, size in enumerate(sizes, start=1):
        if size == 0:
            raise SdpaParseError(struct_line, "block size 0")
        if size > 0:
            locate[(k, None)] = len(blocks)
            blocks.append(Block(f"b{k}", size))
        else:
            for i in range(1, -size + 1):
                locate[(k, i)] = len(blocks)
                blocks.append(Block(f"b{k}_{i}", 1))
    if names is not None:
        if len(names) != len(blocks):
            raise SdpaParseError(1, "block-name comment does not match block structure")
        blocks = [Block(n, b.dim) for n, b in zip(names, blocks)]

    forms = [LinearForm() for _ in range(m + 1)]
    for lineno, tokens in body:
        if len(tokens) != 5:
            raise SdpaParseError(lineno, f"expected 5 fields, got {len(tokens)}")
        try:
            matno, blkno, i, j = (int(t) for t in tokens[:4])
            value = float(tokens[4])
        except ValueError as exc:
            raise SdpaParseError(lineno, str(exc)) from None
        if not 0 <= matno <= m:
            raise SdpaParseError(lineno, f"matrix number {matno} out of range")
        if not 1 <= blkno <= nblock:
            raise SdpaParseError(lineno, f"block number {blkno} out of range")
        size = sizes[blkno - 1]
        if size > 0:
            bidx, r, c = locate[(blkno, None)], i - 1, j - 1
            if not (0 <= r < size and 0 <= c < size):
                raise SdpaParseError(lineno, f"entry ({i},{j}) outside block of size {size}")
        else:
            if i != j or not 1 <= i <= -size:
                raise SdpaParseError(lineno, f"bad diagonal-block entry ({i},{j})")
            bidx, r, c = locate[(blkno, i)], 0, 0
        b = blocks[bidx]
        mat = forms[matno].coeffs.setdefault(b.name, np.zeros((b.dim, b.dim)))
        mat[r, c] = value
        mat[c, r] = value

    sign = 1.0 if sense == "max" else -1.0
    objective = LinearForm({k: sign * v for k, v in forms[0].coeffs.items()})
    constraints = [Constraint(forms[i].coeffs, {}, rhs=rhs[i - 1]) for i in range(1, m + 1)]
    return SdpProblem(blocks, [], objective, constraints, sense)


def _int(line, k) -> int:
    lineno, tokens = line
    try:
        return int(tokens[k])
    except (IndexError, ValueError):
        raise SdpaParseError(lineno, f"expected an integer, got {tokens[k:k + 1]}") from None


def _float(line, k) -> float:
    lineno, tokens = line
    try:
        return float(tokens[k])
    except (IndexError, ValueError):
        raise SdpaParseError(lineno, f"expected a number, got {tokens[k:k + 1]}") from None
