"""Reduction of general problems to real symmetric standard form."""
from __future__ import annotations

import numpy as np

from .problem import Block, Constraint, LinearForm, SdpProblem


def embed_hermitian(h) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]]; has the spectrum of H with doubled multiplicity."""
    h = np.asarray(h)
    re, im = np.real(h), np.imag(h)
    return np.block([[re, -im], [im, re]]).astype(float)


def unembed_hermitian(s) -> np.ndarray:
    """Inverse of ``embed_hermitian`` on its range; projects general symmetric input."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0] // 2
    a, b, c, d = s[:n, :n], s[:n, n:], s[n:, :n], s[n:, n:]
    return 0.5 * (a + d) + 0.5j * (c - b)


def _embed_form(form: LinearForm, complex_blocks: set[str], cls=LinearForm, **extra):
    coeffs = {}
    for k, c in form.coeffs.items():
        if k in complex_blocks:
            # factor 1/2 keeps Tr(embed(G)/2 . embed(X)) = Re Tr(G X)
            coeffs[k] = 0.5 * embed_hermitian(c)
        else:
            coeffs[k] = np.asarray(c).real.astype(float)
    return cls(coeffs, dict(form.scalars), **extra)


def embed_complex(problem: SdpProblem) -> SdpProblem:
    """Replace each complex Hermitian block by a real symmetric block of twice the size.

    Optimal values are unchanged: any real PSD solution projects back onto the
    embedded Hermitian structure without changing any linear form.
    """
    complex_blocks = {b.name for b in problem.blocks if b.complex}
    blocks = [Block(b.name, 2 * b.dim if b.complex else b.dim, False) for b in problem.blocks]
    objective = _embed_form(problem.objective, complex_blocks)
    constraints = [_embed_form(c, complex_blocks, Constraint, rhs=c.rhs, tag=c.tag)
                   for c in problem.constraints]
    meta = dict(problem.metadata)
    meta.setdefault("embedded_blocks", sorted(complex_blocks))
    return SdpProblem(blocks, list(problem.free_scalars), objective, constraints, problem.sense, meta)


def split_name(scalar: str) -> tuple[str, str]:
    return f"{scalar}+", f"{scalar}-"


def split_free_scalars(problem: SdpProblem) -> SdpProblem:
    """Write every free scalar t as t+ - t- with two 1x1 PSD blocks."""
    if not problem.free_scalars:
        return problem
    blocks = list(problem.blocks)
    for s in problem.free_scalars:
        pos, neg = split_name(s)
        blocks += [Block(pos, 1), Block(neg, 1)]

    def convert(form, cls=LinearForm, **extra):
        coeffs = dict(form.coeffs)
        for s, v in form.scalars.items():
            pos, neg = split_name(s)
            coeffs[pos] = np.array([[v]], dtype=float)
            coeffs[neg] = np.array([[-v]], dtype=float)
        return cls(coeffs, {}, **extra)

    objective = convert(problem.objective)
    constraints = [convert(c, Constraint, rhs=c.rhs, tag=c.tag) for c in problem.constraints]
    meta = dict(problem.metadata)
    meta["split_scalars"] = list(problem.free_scalars)
    return SdpProblem(blocks, [], objective, constraints, problem.sense, meta)


def standardize(problem: SdpProblem) -> SdpProblem:
    """Real symmetric blocks only, no free scalars."""
    return split_free_scalars(embed_complex(problem))
