"""Dense complex linear algebra on ordered multipartite spaces.

All tensor products use one index convention: the first factor occupies the
most significant block of the row/column index ("big-endian").
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-9

KET0 = np.array([1.0, 0.0])
KET1 = np.array([0.0, 1.0])
KET_PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
KET_MINUS = np.array([1.0, -1.0]) / np.sqrt(2)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class TensorSpace:
    """Ordered list of labelled subsystems."""

    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.labels) != len(self.dims):
            raise ValueError("labels and dims must have the same length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate subsystem labels in {self.labels}")
        if any(d < 1 for d in self.dims):
            raise ValueError("subsystem dimensions must be positive")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown subsystem label {label!r}; have {self.labels}") from None

    def subspace(self, labels: Iterable[str]) -> "TensorSpace":
        """The subspace spanned by ``labels``, kept in this space's order."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        keep = [i for i, lab in enumerate(self.labels) if lab in wanted]
        return TensorSpace(tuple(self.labels[i] for i in keep), tuple(self.dims[i] for i in keep))


def _as_square(m, name="matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def kron(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of square matrices, first factor most significant."""
    factors = list(factors)
    if not factors:
        raise ValueError("kron needs at least one factor")
    mats = [_as_square(f, f"factor {i}") for i, f in enumerate(factors)]
    return reduce(np.kron, mats)


def kron_vectors(vectors: Sequence[np.ndarray]) -> np.ndarray:
    vectors = list(vectors)
    if not vectors:
        raise ValueError("kron_vectors needs at least one factor")
    return reduce(np.kron, [np.asarray(v).ravel() for v in vectors])


def dagger(m) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def trace(m) -> complex:
    return complex(np.trace(_as_square(m)))


def projector(v) -> np.ndarray:
    """|v><v| for an (unnormalised) vector v."""
    v = np.asarray(v).ravel()
    return np.outer(v, np.conj(v))


def max_entangled(d: int = 2) -> np.ndarray:
    """Unnormalised |1>> = sum_i |i>|i>."""
    return np.eye(d).ravel().astype(float)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = _as_square(m)
    return bool(np.all(np.abs(m - dagger(m)) <= tol))


def _check_space(m: np.ndarray, space: TensorSpace):
    if m.shape != (space.dim, space.dim):
        raise ValueError(f"matrix of shape {m.shape} does not match space dimension {space.dim}")


def partial_trace(m, space: TensorSpace, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem not in ``keep``.

    The kept subsystems appear in the order they have in ``space``.
    """
    m = _as_square(m)
    _check_space(m, space)
    keep = list(keep)
    keep_idx = sorted(space.index(lab) for lab in set(keep))
    n = len(space.dims)
    t = m.reshape(space.dims + space.dims)
    row = list(range(n))
    col = [i if i not in keep_idx else n + i for i in range(n)]
    out = [i for i in keep_idx] + [n + i for i in keep_idx]
    res = np.einsum(t, row + col, out)
    d = int(np.prod([space.dims[i] for i in keep_idx], dtype=np.int64))
    return np.asarray(res).reshape(d, d)


def permutation_axes(space: TensorSpace, order: Sequence[str]) -> list[int]:
    order = list(order)
    if sorted(order) != sorted(space.labels):
        raise ValueError(f"order {order} is not a permutation of {space.labels}")
    return [space.index(lab) for lab in order]


def permute_vector(v, space: TensorSpace, order: Sequence[str]) -> np.ndarray:
    """Reorder the tensor factors of a vector from ``space.labels`` to ``order``."""
    v = np.asarray(v).ravel()
    if v.shape[0] != space.dim:
        raise ValueError("vector does not match space dimension")
    axes = permutation_axes(space, order)
    return v.reshape(space.dims).transpose(axes).ravel()


def permute_operator(m, space: TensorSpace, order: Sequence[str]) -> np.ndarray:
    m = _as_square(m)
    _check_space(m, space)
    axes = permutation_axes(space, order)
    n = len(axes)
    t = m.reshape(space.dims + space.dims).transpose(axes + [n + a for a in axes])
    return t.reshape(space.dim, space.dim)


def local_operator(space: TensorSpace, label: str, op) -> np.ndarray:
    """The operator ``op`` acting on subsystem ``label``, identity elsewhere."""
    k = space.index(label)
    factors = [np.eye(d) for d in space.dims]
    factors[k] = np.asarray(op)
    return kron(factors)


def min_eigenvalue(m) -> float:
    m = _as_square(m)
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(m, tol: float = PSD_TOL) -> bool:
    """True iff the Hermitian matrix ``m`` has smallest eigenvalue >= -tol."""
    m = _as_square(m)
    if not is_hermitian(m):
        raise ValueError("is_psd requires a Hermitian matrix")
    return min_eigenvalue(m) >= -tol


def fidelity_with_pure(target, rho, tol: float = 1e-9) -> float:
    """<psi|rho|psi> for a normalised rank-one projector ``target`` = |psi><psi|."""
    target = _as_square(target, "target")
    rho = _as_square(rho, "rho")
    if target.shape != rho.shape:
        raise ValueError("target and rho must have the same shape")
    if not is_hermitian(target, 1e-9) or not is_hermitian(rho, 1e-9):
        raise ValueError("target and rho must be Hermitian")
    if abs(np.trace(target) - 1) > tol or abs(np.trace(rho) - 1) > tol:
        raise ValueError("target and rho must have unit trace")
    if np.linalg.norm(target @ target - target) > 1e-8:
        raise ValueError("target must be a rank-one projector")
    if min_eigenvalue(rho) < -tol:
        raise ValueError("rho is not positive semidefinite")
    # Tr(P rho) equals <psi|rho|psi> for P = |psi><psi|
    f = np.trace(target @ rho)
    return float(np.clip(f.real, 0.0, 1.0))
