"""Finite photon statistics: Poisson counts, frequencies and Monte Carlo error bars.

Random numbers come from numpy's Philox4x64-10 counter-based generator.  Draw
number ``i`` of a run seeded with ``seed`` uses ``SeedSequence([seed, i])``,
so every sample is reproducible on its own and independent of scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import qmat
from .switch import TABLE_SHAPE, InstrumentSet, ProbabilityTable, settings

RNG_ALGORITHM = "numpy.random.Philox (4x64-10) seeded by SeedSequence([seed, sample_index])"
DEFAULT_MEAN_COUNTS = 4.0e4
DEFAULT_MC_SAMPLES = 50
TARGET_S_STD = 3.0e-4
COUNT_HEADER = ["x", "y", "z", "a", "b", "c", "count"]
FIDELITY_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))  # (a, x)


class CountFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ExperimentConfig:
    mean_counts_per_setting: float = DEFAULT_MEAN_COUNTS
    visibility: float = 1.0
    seed: int = 0
    mc_samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        if not np.isfinite(self.mean_counts_per_setting) or self.mean_counts_per_setting < 0:
            raise ValueError("mean_counts_per_setting must be a finite nonnegative number")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")
        if not 0 <= int(self.seed) < 2 ** 64 or int(self.seed) != self.seed:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1:
            raise ValueError("mc_samples must be a positive integer")

    def to_dict(self) -> dict:
        return {**asdict(self), "rng": RNG_ALGORITHM}


def generator(seed: int, sample_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(sample_index)])))


@dataclass
class CountTable:
    """Photon counts indexed [x, y, z, a, b, c]."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.shape != TABLE_SHAPE:
            raise ValueError(f"count table must have shape {TABLE_SHAPE}, got {arr.shape}")
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("counts must be integers")
        elif arr.dtype.kind not in "iu":
            raise ValueError("counts must be integers")
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        self.counts = arr.astype(np.int64)

    def __eq__(self, other) -> bool:
        return isinstance(other, CountTable) and np.array_equal(self.counts, other.counts)

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=(3, 4, 5))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COUNT_HEADER)
        for idx in np.ndindex(TABLE_SHAPE):
            w.writerow([*idx, int(self.counts[idx])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def sample_counts(p: ProbabilityTable, cfg: ExperimentConfig, sample_index: int = 0) -> CountTable:
    """Independent Poisson(N p(abc|xyz)) counts for every cell."""
    p = ProbabilityTable(p.values).validate()
    if cfg.mean_counts_per_setting == 0 and np.any(p.values > 0):
        raise ValueError("zero mean counts requested for a table with nonzero probability mass")
    lam = cfg.mean_counts_per_setting * np.clip(p.values, 0.0, None)
    return CountTable(generator(cfg.seed, sample_index).poisson(lam))


def frequencies(c: CountTable) -> ProbabilityTable:
    """Per-setting relative frequencies."""
    totals = c.totals()
    for x, y, z in settings():
        if totals[x, y, z] <= 0:
            raise ValueError(f"setting (x,y,z)=({x},{y},{z}) has no counts")
    return ProbabilityTable(c.counts / totals[..., None, None, None])


@dataclass
class MonteCarloResult:
    S_mean: float
    S_std: float
    sigmas: float
    samples: np.ndarray
    config: ExperimentConfig

    def to_dict(self) -> dict:
        sig = self.sigmas if np.isfinite(self.sigmas) else "inf"
        return {"S_mean": self.S_mean, "S_std": self.S_std, "sigmas": sig, "config": self.config.to_dict()}

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**self.to_dict(), **extra}, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text


def monte_carlo_S(p_model: ProbabilityTable, alpha, cfg: ExperimentConfig) -> MonteCarloResult:
    """Mean and spread of S over ``cfg.mc_samples`` simulated count tables.

    The standard deviation uses ddof=1.  ``sigmas`` = |S_mean| / S_std, taken
    as 0 when both vanish and inf when only the spread vanishes.
    """
    if cfg.mc_samples < 2:
        raise ValueError("monte_carlo_S needs at least 2 samples")
    a = alpha.alpha if hasattr(alpha, "alpha") else np.asarray(alpha, dtype=float)
    if a.shape != TABLE_SHAPE:
        raise ValueError(f"alpha must have shape {TABLE_SHAPE}")
    S = np.array([np.sum(a * frequencies(sample_counts(p_model, cfg, i)).values)
                  for i in range(cfg.mc_samples)])
    mean = float(S.mean())
    std = float(S.std(ddof=1))
    if std > 0:
        sigmas = abs(mean) / std
    else:
        sigmas = 0.0 if mean == 0 else np.inf
    return MonteCarloResult(mean, std, sigmas, S, cfg)


def calibrate_counts(p_model: ProbabilityTable, alpha, target_std: float = TARGET_S_STD,
                     cfg: ExperimentConfig | None = None, rounds: int = 2) -> tuple[float, MonteCarloResult]:
    """Mean counts per setting giving S_std close to ``target_std``.

    Uses S_std proportional to N^(-1/2), re-measured after each update.
    """
    if target_std <= 0:
        raise ValueError("target_std must be positive")
    cfg = cfg or ExperimentConfig()
    n = cfg.mean_counts_per_setting
    result = monte_carlo_S(p_model, alpha, cfg)
    for _ in range(rounds):
        if result.S_std == 0:
            raise ValueError("S has no statistical spread; nothing to calibrate")
        n = n * (result.S_std / target_std) ** 2
        cfg = ExperimentConfig(n, cfg.visibility, cfg.seed, cfg.mc_samples)
        result = monte_carlo_S(p_model, alpha, cfg)
    return n, result


# -- count files -----------------------------------------------------------

def export_counts(c: CountTable, path) -> str:
    return c.to_csv(path)


def ingest_counts(path) -> CountTable:
    """Read a count CSV; absent cells are zero (with a warning), absent settings are errors."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != COUNT_HEADER:
        raise CountFormatError(1, f"expected header {','.join(COUNT_HEADER)}, got {header}")
    counts = np.zeros(TABLE_SHAPE, dtype=np.int64)
    seen = np.zeros(TABLE_SHAPE, dtype=bool)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not v.strip() for v in row):
            continue
        if len(row) != 7:
            raise CountFormatError(lineno, f"expected 7 fields, got {len(row)}")
        try:
            idx = tuple(int(v) for v in row[:6])
            value = int(row[6])
        except ValueError as exc:
            raise CountFormatError(lineno, str(exc)) from None
        if any(not 0 <= i < n for i, n in zip(idx, TABLE_SHAPE)):
            raise CountFormatError(lineno, f"index {idx} out of range for shape {TABLE_SHAPE}")
        if value < 0:
            raise CountFormatError(lineno, f"negative count {value}")
        if seen[idx]:
            raise CountFormatError(lineno, f"duplicate cell {idx}")
        seen[idx] = True
        counts[idx] = value
    for x, y, z in settings():
        if not seen[x, y, z].any():
            raise ValueError(f"count file has no rows for setting (x,y,z)=({x},{y},{z})")
    missing = int((~seen).sum())
    if missing:
        warnings.warn(f"{missing} count cell(s) absent from {path}; treated as 0", stacklevel=2)
    return CountTable(counts)


# -- instrument fidelities --------------------------------------------------

def fidelity_report(measured, ideal: InstrumentSet) -> list[float]:
    """Fidelity of each measured Choi state with the normalised ideal element.

    States are ordered (a|x) = (0|0), (0|1), (1|0), (1|1).
    """
    measured = list(measured)
    if len(measured) != len(FIDELITY_ORDER):
        raise ValueError(f"expected {len(FIDELITY_ORDER)} measured states, got {len(measured)}")
    out = []
    for rho, key in zip(measured, FIDELITY_ORDER):
        target = np.asarray(ideal[key], dtype=complex)
        target = target / np.trace(target)
        out.append(qmat.fidelity_with_pure(target, rho))
    return out


def depolarized_states(ideal: InstrumentSet, fidelities) -> list[np.ndarray]:
    """Choi states (1 - p) P + p 1/d with p chosen to give each requested fidelity.

    For d = 4, F = 1 - 3p/4, so p = 4(1 - F)/3.
    """
    fidelities = list(fidelities)
    if len(fidelities) != len(FIDELITY_ORDER):
        raise ValueError(f"expected {len(FIDELITY_ORDER)} fidelities")
    states = []
    for f, key in zip(fidelities, FIDELITY_ORDER):
        target = np.asarray(ideal[key], dtype=complex)
        target = target / np.trace(target)
        d = target.shape[0]
        p = (1 - f) * d / (d - 1)
        if not 0 <= p <= d / (d - 1):
            raise ValueError(f"fidelity {f} not reachable by depolarising noise")
        states.append((1 - p) * target + p * np.eye(d) / d)
    return states


def states_to_json(states, path=None) -> str:
    payload = {"order": [f"({a}|{x})" for a, x in FIDELITY_ORDER],
               "states": [{"re": np.real(s).tolist(), "im": np.imag(s).tolist()} for s in states]}
    text = json.dumps(payload, indent=1)
    if path is not None:
        Path(path).write_text(text)
    return text


def states_from_json(path) -> list[np.ndarray]:
    data = json.loads(Path(path).read_text())
    try:
        return [np.asarray(s["re"], dtype=float) + 1j * np.asarray(s["im"], dtype=float) for s in data["states"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed state file: {exc}") from None
