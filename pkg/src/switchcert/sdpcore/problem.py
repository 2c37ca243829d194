"""Problem containers for block semidefinite programs.

A problem maximises (or minimises) a linear functional

    sum_k Re Tr(C_k X_k) + sum_s c_s t_s

over PSD block variables X_k (real symmetric or complex Hermitian) and free
real scalars t_s, subject to equalities of the same linear form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class Block:
    name: str
    dim: int
    complex: bool = False


@dataclass
class LinearForm:
    """sum_k Re Tr(coeffs[k] X_k) + sum_s scalars[s] t_s."""

    coeffs: dict[str, np.ndarray] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)

    def add(self, block: str, matrix, weight: float = 1.0) -> "LinearForm":
        m = weight * np.asarray(matrix)
        if block in self.coeffs:
            self.coeffs[block] = self.coeffs[block] + m
        else:
            self.coeffs[block] = m
        return self

    def add_scalar(self, name: str, value: float) -> "LinearForm":
        self.scalars[name] = self.scalars.get(name, 0.0) + float(value)
        return self

    def evaluate(self, blocks: dict[str, np.ndarray], scalars: dict[str, float]) -> float:
        total = 0.0
        for k, c in self.coeffs.items():
            total += float(np.real(np.sum(c.T * blocks[k])))
        for s, v in self.scalars.items():
            total += v * scalars[s]
        return total


@dataclass
class Constraint(LinearForm):
    rhs: float = 0.0
    tag: Hashable = None


@dataclass
class SdpProblem:
    blocks: list[Block]
    free_scalars: list[str] = field(default_factory=list)
    objective: LinearForm = field(default_factory=LinearForm)
    constraints: list[Constraint] = field(default_factory=list)
    sense: str = "max"
    metadata: dict[str, Any] = field(default_factory=dict)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def block_map(self) -> dict[str, Block]:
        return {b.name: b for b in self.blocks}

    def add_constraint(self, form: LinearForm, rhs: float, tag=None) -> Constraint:
        con = Constraint(dict(form.coeffs), dict(form.scalars), float(rhs), tag)
        self.constraints.append(con)
        return con

    def validate(self) -> "SdpProblem":
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {self.sense!r}")
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError("duplicate block names")
        if set(names) & set(self.free_scalars):
            raise ValueError("block and scalar names overlap")
        bmap = self.block_map
        forms = [("objective", self.objective)] + [(f"constraint {i}", c) for i, c in enumerate(self.constraints)]
        for where, form in forms:
            for k, c in form.coeffs.items():
                if k not in bmap:
                    raise ValueError(f"{where} references unknown block {k!r}")
                c = np.asarray(c)
                if c.shape != (bmap[k].dim, bmap[k].dim):
                    raise ValueError(f"{where}: coefficient for {k!r} has shape {c.shape}")
                if not np.all(np.isfinite(c)):
                    raise ValueError(f"{where}: non-finite coefficient for {k!r}")
                if np.max(np.abs(c - np.conj(c).T), initial=0.0) > HERMITIAN_TOL:
                    raise ValueError(f"{where}: coefficient for {k!r} is not Hermitian")
                if not bmap[k].complex and np.iscomplexobj(c) and np.max(np.abs(c.imag)) > 0:
                    raise ValueError(f"{where}: complex coefficient on real block {k!r}")
            for s in form.scalars:
                if s not in self.free_scalars:
                    raise ValueError(f"{where} references unknown scalar {s!r}")
        for i, c in enumerate(self.constraints):
            if not np.isfinite(c.rhs):
                raise ValueError(f"constraint {i} has non-finite rhs")
        return self

    def structurally_equal(self, other: "SdpProblem", atol: float = 1e-15) -> bool:
        if [(b.name, b.dim, b.complex) for b in self.blocks] != [(b.name, b.dim, b.complex) for b in other.blocks]:
            return False
        if self.free_scalars != other.free_scalars or self.sense != other.sense:
            return False
        if len(self.constraints) != len(other.constraints):
            return False
        pairs = [(self.objective, other.objective)] + list(zip(self.constraints, other.constraints))
        for f, g in pairs:
            if not _forms_equal(f, g, self.block_map, atol):
                return False
        return all(abs(c.rhs - d.rhs) <= atol for c, d in zip(self.constraints, other.constraints))


def _forms_equal(f: LinearForm, g: LinearForm, bmap, atol) -> bool:
    for k in set(f.coeffs) | set(g.coeffs):
        n = bmap[k].dim
        a = np.asarray(f.coeffs.get(k, np.zeros((n, n))))
        b = np.asarray(g.coeffs.get(k, np.zeros((n, n))))
        if np.max(np.abs(a - b)) > atol:
            return False
    for s in set(f.scalars) | set(g.scalars):
        if abs(f.scalars.get(s, 0.0) - g.scalars.get(s, 0.0)) > atol:
            return False
    return True


@dataclass
class SdpSolution:
    status: str  # optimal | inaccurate | infeasible | unbounded
    primal_objective: float
    dual_objective: float
    primal_blocks: dict[str, np.ndarray]
    scalars: dict[str, float]
    dual_multipliers: np.ndarray
    dual_slacks: dict[str, np.ndarray]
    gap: float
    iterations: int
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    history: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def value(self) -> float:
        return self.primal_objective
