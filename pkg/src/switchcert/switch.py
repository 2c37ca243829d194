"""Quantum switch process, local instruments and outcome statistics."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import qmat
from .qmat import KET0, KET1, KET_MINUS, KET_PLUS, TensorSpace

SWITCH_LABELS = ("A_I", "A_O", "B_I", "B_O", "C_t", "C_c")
SWITCH_SPACE = TensorSpace(SWITCH_LABELS, (2,) * 6)
PARTY_SPACES = {
    "Alice": TensorSpace(("A_I", "A_O"), (2, 2)),
    "Bob": TensorSpace(("B_I", "B_O"), (2, 2)),
    "Charlie": TensorSpace(("C_t", "C_c"), (2, 2)),
}

N_SETTINGS = 2
N_AB_OUTCOMES = 2
N_C_OUTCOMES = 4
TABLE_SHAPE = (2, 2, 2, 2, 2, 4)  # indexed [x, y, z, a, b, c]
N_OUTCOMES = N_AB_OUTCOMES * N_AB_OUTCOMES * N_C_OUTCOMES

# measurement bases: setting 0 -> Z eigenbasis, setting 1 -> X eigenbasis
BASES = {0: (KET0, KET1), 1: (KET_PLUS, KET_MINUS)}
CONTROL_BASIS = (KET_PLUS, KET_MINUS)


def settings():
    return itertools.product(range(2), range(2), range(2))


def outcomes():
    return itertools.product(range(2), range(2), range(4))


def charlie_states(c: int, z: int) -> tuple[np.ndarray, np.ndarray]:
    """(target, control) kets of Charlie's outcome ``c`` for setting ``z``.

    The low bit of c selects the target outcome, the high bit the control
    outcome (|+> or |->).
    """
    return BASES[z][c % 2], CONTROL_BASIS[c // 2]


@dataclass
class ProcessMatrix:
    matrix: np.ndarray
    space: TensorSpace = SWITCH_SPACE

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (self.space.dim, self.space.dim):
            raise ValueError("process matrix does not match its space")

    def validate(self, tol: float = qmat.PSD_TOL):
        if not qmat.is_hermitian(self.matrix):
            raise ValueError("process matrix is not Hermitian")
        if not qmat.is_psd(self.matrix, tol):
            raise ValueError("process matrix is not positive semidefinite")
        expected = self.space.dims[self.space.index("A_O")] * self.space.dims[self.space.index("B_O")]
        tr = np.trace(self.matrix).real
        if abs(tr - expected) > tol:
            raise ValueError(f"process matrix trace {tr} != {expected}")
        return self


@dataclass
class InstrumentSet:
    """Choi operators keyed by (outcome, setting)."""

    party: str
    elements: dict

    @property
    def space(self) -> TensorSpace:
        return PARTY_SPACES[self.party]

    @property
    def n_outcomes(self) -> int:
        return 1 + max(k[0] for k in self.elements)

    @property
    def n_settings(self) -> int:
        return 1 + max(k[1] for k in self.elements)

    def __getitem__(self, key) -> np.ndarray:
        return self.elements[key]

    def completeness_errors(self, tol: float = qmat.PSD_TOL) -> list[str]:
        errors = []
        for key, el in self.elements.items():
            if not qmat.is_hermitian(el) or not qmat.is_psd(el, tol):
                errors.append(f"element {key} is not positive semidefinite")
        for s in range(self.n_settings):
            total = sum(self.elements[(o, s)] for o in range(self.n_outcomes))
            if self.party == "Charlie":
                ref, got = np.eye(4), total
            else:
                inp = self.space.labels[0]
                ref, got = np.eye(2), qmat.partial_trace(total, self.space, [inp])
            if np.max(np.abs(got - ref)) > tol:
                errors.append(f"setting {s} violates completeness")
        return errors


@dataclass
class ProbabilityTable:
    """p(abc|xyz) stored as an array indexed [x, y, z, a, b, c]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != TABLE_SHAPE:
            raise ValueError(f"probability table must have shape {TABLE_SHAPE}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("probability table contains non-finite entries")

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def uniform(cls) -> "ProbabilityTable":
        return cls(np.full(TABLE_SHAPE, 1.0 / N_OUTCOMES))

    def validate(self, tol: float = 1e-9) -> "ProbabilityTable":
        if np.min(self.values) < -1e-12:
            raise ValueError(f"negative probability {np.min(self.values)}")
        sums = self.setting_sums()
        bad = np.argwhere(np.abs(sums - 1) > tol)
        if len(bad):
            x, y, z = bad[0]
            raise ValueError(f"setting (x,y,z)=({x},{y},{z}) sums to {sums[x, y, z]!r}, not 1")
        return self

    def clipped(self) -> "ProbabilityTable":
        return ProbabilityTable(np.clip(self.values, 0.0, None))

    def setting_sums(self) -> np.ndarray:
        return self.values.sum(axis=(3, 4, 5))

    def mix(self, other: "ProbabilityTable", weight: float) -> "ProbabilityTable":
        """weight * self + (1 - weight) * other."""
        return ProbabilityTable(weight * self.values + (1 - weight) * other.values)

    def total_variation(self, other: "ProbabilityTable") -> np.ndarray:
        """Per-setting total-variation distance, shape (2, 2, 2)."""
        return 0.5 * np.abs(self.values - other.values).sum(axis=(3, 4, 5))

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {f"{x},{y},{z}": self.values[x, y, z].tolist() for x, y, z in settings()}

    @classmethod
    def from_dict(cls, data: dict) -> "ProbabilityTable":
        values = np.zeros(TABLE_SHAPE)
        for x, y, z in settings():
            key = f"{x},{y},{z}"
            if key not in data:
                raise ValueError(f"missing setting {key!r}")
            block = np.asarray(data[key], dtype=float)
            if block.shape != (2, 2, 4):
                raise ValueError(f"setting {key!r} must be a 2x2x4 array, got {block.shape}")
            values[x, y, z] = block
        return cls(values)

    def to_json(self, path=None, **extra) -> str:
        payload = {"table": self.to_dict(), **extra}
        text = json.dumps(payload, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "ProbabilityTable":
        """Load from a path or a JSON string; accepts a bare or wrapped table."""
        text = _read_text(source)
        data = json.loads(text)
        if "table" in data:
            data = data["table"]
        return cls.from_dict(data)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z", "a", "b", "c", "p"])
        for idx in np.ndindex(TABLE_SHAPE):
            w.writerow([*idx, repr(float(self.values[idx]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ProbabilityTable":
        text = _read_text(source)
        values = np.full(TABLE_SHAPE, np.nan)
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["x", "y", "z", "a", "b", "c", "p"]:
            raise ValueError(f"line 1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                idx = tuple(int(v) for v in row[:6])
                values[idx] = float(row[6])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        if np.isnan(values).any():
            raise ValueError("CSV table is missing cells")
        return cls(values)


def _read_text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    s = str(source)
    if s.lstrip().startswith(("{", "x,")):
        return s
    return Path(s).read_text()


# -- constructors --------------------------------------------------------

def _branch(control: int) -> np.ndarray:
    """Unnormalised switch branch vector in canonical label order.

    control=0: |0>^{A_I} |1>>^{A_O B_I} |1>>^{B_O C_t} |0>^{C_c}
    control=1: |0>^{B_I} |1>>^{B_O A_I} |1>>^{A_O C_t} |1>^{C_c}
    """
    phi = qmat.max_entangled(2)
    if control == 0:
        order = ("A_I", "A_O", "B_I", "B_O", "C_t", "C_c")
        vec = qmat.kron_vectors([KET0, phi, phi, KET0])
    else:
        order = ("B_I", "B_O", "A_I", "A_O", "C_t", "C_c")
        vec = qmat.kron_vectors([KET0, phi, phi, KET1])
    native = TensorSpace(order, (2,) * 6)
    return qmat.permute_vector(vec, native, SWITCH_LABELS)


def switch_vector() -> np.ndarray:
    return (_branch(0) + _branch(1)) / np.sqrt(2)


def build_switch() -> ProcessMatrix:
    """W = |w><w| with control |+> and target |0>; trace 4."""
    return ProcessMatrix(qmat.projector(switch_vector()))


def build_definite_order(order: str) -> ProcessMatrix:
    """The switch with its control fixed to |0> ("A<B<C") or |1> ("B<A<C")."""
    try:
        control = {"A<B<C": 0, "B<A<C": 1}[order]
    except KeyError:
        raise ValueError(f"unknown causal order {order!r}") from None
    return ProcessMatrix(qmat.projector(_branch(control)))


def build_separable_reference(q: float) -> ProcessMatrix:
    """q W^{A<B<C} + (1-q) W^{B<A<C}."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    w_abc = build_definite_order("A<B<C").matrix
    w_bac = build_definite_order("B<A<C").matrix
    return ProcessMatrix(q * w_abc + (1 - q) * w_bac)


def apply_control_dephasing(W: ProcessMatrix, V: float) -> ProcessMatrix:
    """Damp the coherence between the two control branches by visibility V."""
    if not 0.0 <= V <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {V}")
    zc = qmat.local_operator(W.space, "C_c", qmat.PAULI_Z.real)
    m = W.matrix
    dephased = 0.5 * (m + zc @ m @ zc)
    return ProcessMatrix(V * m + (1 - V) * dephased, W.space)


def build_instruments(party: str) -> InstrumentSet:
    """Measure-and-reprepare instruments (Alice, Bob) or Charlie's measurements."""
    if party in ("Alice", "Bob"):
        elements = {}
        for x in range(2):
            for a in range(2):
                p = qmat.projector(BASES[x][a])
                elements[(a, x)] = np.kron(p, p)
        return InstrumentSet(party, elements)
    if party == "Charlie":
        elements = {}
        for z in range(2):
            for c in range(4):
                t, ctl = charlie_states(c, z)
                elements[(c, z)] = np.kron(qmat.projector(t), qmat.projector(ctl))
        return InstrumentSet(party, elements)
    raise ValueError(f"unknown party {party!r}")


def born_probabilities(W: ProcessMatrix, A: InstrumentSet, B: InstrumentSet, M: InstrumentSet,
                       tol: float = 1e-9) -> ProbabilityTable:
    """p(abc|xyz) = Tr[(A_{a|x} (x) B_{b|y} (x) M_{c|z}) W]."""
    if W.space.labels != SWITCH_LABELS:
        W = ProcessMatrix(qmat.permute_operator(W.matrix, W.space, SWITCH_LABELS))
    # Tr[(A (x) B (x) M) W] as a contraction over the three party slots
    w = W.matrix.reshape((4, 4, 4) * 2)
    Aa = np.array([[A[(a, x)] for a in range(2)] for x in range(2)])
    Bb = np.array([[B[(b, y)] for b in range(2)] for y in range(2)])
    Mm = np.array([[M[(c, z)] for c in range(4)] for z in range(2)])
    # Tr(O W) = sum O[r, c] W[c, r] with r, c split into the three party slots
    vals = np.einsum("xaij,ybkl,zcmn,jlnikm->xyzabc", Aa, Bb, Mm, w, optimize=True)
    if np.max(np.abs(vals.imag)) > 1e-10:
        raise ValueError("Born probabilities have a non-negligible imaginary part")
    vals = vals.real
    if np.min(vals) < -1e-12:
        raise ValueError(f"negative Born probability {np.min(vals)}")
    table = ProbabilityTable(np.clip(vals, 0.0, None))
    sums = table.setting_sums()
    if np.max(np.abs(sums - 1)) > tol:
        raise ValueError(f"Born table not normalised (max deviation {np.max(np.abs(sums - 1)):.3e}); "
                         "instruments and process are inconsistent")
    return table


def ideal_table(V: float = 1.0) -> ProbabilityTable:
    """Born table of the switch dephased to visibility V with the standard instruments."""
    W = apply_control_dephasing(build_switch(), V)
    return born_probabilities(W, build_instruments("Alice"), build_instruments("Bob"),
                              build_instruments("Charlie"))


def circuit_oracle_probabilities(V: float = 1.0, control=None) -> ProbabilityTable:
    """Simulate the switch as a controlled circuit, independent of the process matrix.

    For outcomes (a, b) the conditional operator on control (x) target is
    |0><0| (x) K_b K_a + |1><1| (x) K_a K_b, applied to control (x) |0><0|.
    Off-diagonal control blocks are then scaled by V and Charlie measures
    target (x) control.  ``control`` defaults to |+>.
    """
    if not 0.0 <= V <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {V}")
    ctl = KET_PLUS if control is None else np.asarray(control, dtype=float)
    rho0 = np.kron(qmat.projector(ctl), qmat.projector(KET0))
    p0, p1 = qmat.projector(KET0), qmat.projector(KET1)
    dephase = np.array([[1.0, V], [V, 1.0]])
    out = np.zeros(TABLE_SHAPE)
    for x, y, z in settings():
        for a, b in itertools.product(range(2), range(2)):
            ka = qmat.projector(BASES[x][a])
            kb = qmat.projector(BASES[y][b])
            op = np.kron(p0, kb @ ka) + np.kron(p1, ka @ kb)
            rho = op @ rho0 @ qmat.dagger(op)
            rho = (rho.reshape(2, 2, 2, 2) * dephase[:, None, :, None]).reshape(4, 4)
            # reorder control (x) target -> target (x) control
            rho_tc = rho.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
            for c in range(4):
                t, cs = charlie_states(c, z)
                v = np.kron(t, cs)
                out[x, y, z, a, b, c] = float(np.real(v @ rho_tc @ v))
    return ProbabilityTable(out)
