"""Semi-device-independent causal models, robustness SDP and tailored inequalities.

Only Alice's instruments are characterised.  A causal model is a pair of
assemblages {w_{bc|yz}} on A_I (x) A_O, one per causal order, whose convex
weight q is absorbed into the operators (each branch is subnormalised to
trace d_{A_O} * weight).
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qmat
from .sdpcore import DEFAULT_TOL, Block, LinearForm, SdpProblem, SdpSolution, SolverError, solve
from .switch import N_OUTCOMES, PARTY_SPACES, TABLE_SHAPE, InstrumentSet, ProbabilityTable, settings

ORDERS = ("A<B<C", "B<A<C")
D_AO = 2
ALICE_SPACE = PARTY_SPACES["Alice"]
ASSEMBLAGE_SHAPE = (2, 4, 2, 2)  # [b, c, y, z]
VERDICT_INDEFINITE = "indefinite-causal-order"
VERDICT_CAUSAL = "causal-model-exists"
VERDICT_INCONCLUSIVE = "inconclusive"
VERDICT_TOL = 1e-7
CERTIFICATE_TOL = 1e-7
NORMALIZATION_TOL = 1e-6


def _hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal basis of d x d Hermitian matrices under Re Tr(A B)."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i, j in itertools.combinations(range(d), 2):
        e = np.zeros((d, d), dtype=complex)
        e[i, j] = e[j, i] = 1 / np.sqrt(2)
        basis.append(e)
        e = np.zeros((d, d), dtype=complex)
        e[i, j], e[j, i] = 1j / np.sqrt(2), -1j / np.sqrt(2)
        basis.append(e)
    return basis


HERMITIAN_BASIS = _hermitian_basis(4)


def trace_out_output(m) -> np.ndarray:
    """Tr_{A_O}(m) (x) 1/d_{A_O} on A_I (x) A_O."""
    return np.kron(qmat.partial_trace(m, ALICE_SPACE, ["A_I"]), np.eye(D_AO) / D_AO)


def no_signalling_part(m) -> np.ndarray:
    """m - Tr_{A_O}(m) (x) 1/d; self-adjoint, vanishes exactly on valid marginals."""
    return m - trace_out_output(m)


def block_name(order: str, b: int, c: int, y: int, z: int) -> str:
    return f"w[{order}][b={b},c={c},y={y},z={z}]"


def _keys():
    return itertools.product(range(2), range(4), range(2), range(2))


def _alice_array(A_bar: InstrumentSet) -> np.ndarray:
    """Alice's elements as an array [a, x, 4, 4]."""
    keys = set(A_bar.elements)
    expected = {(a, x) for a in range(2) for x in range(2)}
    if keys != expected:
        raise ValueError(f"Alice's characterised set needs elements {sorted(expected)}, got {sorted(keys)}")
    arr = np.array([[np.asarray(A_bar[(a, x)]) for x in range(2)] for a in range(2)])
    if arr.shape != (2, 2, 4, 4):
        raise ValueError("Alice's elements must be 4x4 operators on A_I (x) A_O")
    return arr


# -- domain types ----------------------------------------------------------

@dataclass
class Assemblage:
    """Subnormalised assemblage of one causal order; operators[b, c, y, z] is 4x4."""

    order: str
    operators: np.ndarray

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"unknown order {self.order!r}")
        self.operators = np.asarray(self.operators, dtype=complex)
        if self.operators.shape != ASSEMBLAGE_SHAPE + (4, 4):
            raise ValueError(f"assemblage operators must have shape {ASSEMBLAGE_SHAPE + (4, 4)}")

    @property
    def weight(self) -> float:
        """Convex weight of this order (trace of any (y,z) marginal over d_{A_O})."""
        return float(np.trace(self.operators[:, :, 0, 0].sum(axis=(0, 1))).real / D_AO)

    def marginal_bc(self, y: int, z: int) -> np.ndarray:
        return self.operators[:, :, y, z].sum(axis=(0, 1))

    def marginal_c(self, b: int, y: int, z: int) -> np.ndarray:
        return self.operators[b, :, y, z].sum(axis=0)

    def violations(self, tol: float = 1e-7) -> list[str]:
        """Every causal-model condition this branch fails, checked directly."""
        out = []
        w = self.operators
        scale = max(1.0, self.weight)
        for b, c, y, z in _keys():
            op = w[b, c, y, z]
            if np.max(np.abs(op - op.conj().T)) > tol:
                out.append(f"{self.order}: operator (b={b},c={c},y={y},z={z}) not Hermitian")
            elif np.linalg.eigvalsh(op)[0] < -tol * scale:
                out.append(f"{self.order}: operator (b={b},c={c},y={y},z={z}) not PSD")
        traces = [np.trace(self.marginal_bc(y, z)).real for y in range(2) for z in range(2)]
        if max(traces) - min(traces) > tol * scale:
            out.append(f"{self.order}: marginal traces differ across settings {traces}")
        for b, y in itertools.product(range(2), range(2)):
            if np.max(np.abs(self.marginal_c(b, y, 0) - self.marginal_c(b, y, 1))) > tol * scale:
                out.append(f"{self.order}: sum_c w_(b={b},c|y={y},z) depends on z")
        if self.order == "A<B<C":
            for y, z in itertools.product(range(2), range(2)):
                m = self.marginal_bc(y, z)
                if np.max(np.abs(m - self.marginal_bc(0, 0))) > tol * scale:
                    out.append(f"{self.order}: (y,z)=({y},{z}) marginal differs from (0,0)")
                if np.max(np.abs(no_signalling_part(m))) > tol * scale:
                    out.append(f"{self.order}: (y,z)=({y},{z}) marginal not of the form rho (x) 1/d")
        else:
            for b, y, z in itertools.product(range(2), range(2), range(2)):
                if np.max(np.abs(no_signalling_part(self.marginal_c(b, y, z)))) > tol * scale:
                    out.append(f"{self.order}: sum_c w_(b={b},c|y={y},z={z}) not of the form rho (x) 1/d")
        return out


def causal_model_violations(models: tuple[Assemblage, Assemblage], tol: float = 1e-7) -> list[str]:
    abc, bac = models
    out = abc.violations(tol) + bac.violations(tol)
    total = abc.weight + bac.weight
    if abs(total - 1) > tol:
        out.append(f"branch weights sum to {total}, not 1")
    if abc.weight < -tol or bac.weight < -tol:
        out.append("negative branch weight")
    return out


def model_probabilities(models: tuple[Assemblage, Assemblage], A_bar: InstrumentSet) -> ProbabilityTable:
    """p(abc|xyz) = Tr(A_{a|x} w_{bc|yz}) for the combined causal model."""
    A = _alice_array(A_bar)
    w = models[0].operators + models[1].operators
    vals = np.einsum("axij,bcyzji->xyzabc", A, w).real
    return ProbabilityTable(vals)


@dataclass
class InequalityCoefficients:
    """Real coefficients alpha[x, y, z, a, b, c] defining S = sum alpha p >= 0."""

    alpha: np.ndarray
    n_outcomes: int = N_OUTCOMES
    p_ref: ProbabilityTable | None = None
    S_ref: float | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != TABLE_SHAPE:
            raise ValueError(f"alpha must have shape {TABLE_SHAPE}")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha has non-finite entries")

    @classmethod
    def zeros(cls) -> "InequalityCoefficients":
        return cls(np.zeros(TABLE_SHAPE))

    def normalization_residual(self, p: ProbabilityTable | None = None) -> float:
        """(1/N_O) sum alpha - 1 - sum alpha p for the reference table."""
        p = self.p_ref if p is None else p
        if p is None:
            raise ValueError("no reference table to check normalisation against")
        return float(self.alpha.sum() / self.n_outcomes - 1 - np.sum(self.alpha * p.values))

    def to_dict(self) -> dict:
        records = [{"x": x, "y": y, "z": z, "a": a, "b": b, "c": c, "alpha": float(self.alpha[x, y, z, a, b, c])}
                   for x, y, z, a, b, c in np.ndindex(TABLE_SHAPE)]
        meta = {"N_O": self.n_outcomes, "S_ref": self.S_ref,
                "p_ref_hash": self.p_ref.digest() if self.p_ref is not None else None,
                "p_ref": self.p_ref.to_dict() if self.p_ref is not None else None}
        return {"coefficients": records, "metadata": meta}

    def to_json(self, path=None, **extra) -> str:
        payload = self.to_dict()
        payload["metadata"].update(extra)
        text = json.dumps(payload, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "InequalityCoefficients":
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        data = json.loads(text)
        alpha = np.full(TABLE_SHAPE, np.nan)
        for rec in data["coefficients"]:
            alpha[rec["x"], rec["y"], rec["z"], rec["a"], rec["b"], rec["c"]] = rec["alpha"]
        if np.isnan(alpha).any():
            raise ValueError("coefficient file is missing entries")
        meta = data.get("metadata", {})
        p_ref = ProbabilityTable.from_dict(meta["p_ref"]) if meta.get("p_ref") else None
        if p_ref is not None and meta.get("p_ref_hash") and p_ref.digest() != meta["p_ref_hash"]:
            raise ValueError("p_ref does not match its recorded hash")
        return cls(alpha, int(meta.get("N_O", N_OUTCOMES)), p_ref, meta.get("S_ref"))


def evaluate_S(alpha: InequalityCoefficients, p: ProbabilityTable) -> float:
    """S = sum_{abcxyz} alpha^{abc}_{xyz} p(abc|xyz)."""
    a = alpha.alpha if isinstance(alpha, InequalityCoefficients) else np.asarray(alpha)
    pv = p.values if isinstance(p, ProbabilityTable) else np.asarray(p)
    if a.shape != pv.shape:
        raise ValueError(f"shape mismatch: alpha {a.shape} vs table {pv.shape}")
    return float(np.sum(a * pv))


@dataclass
class DualCertificate:
    """Structured dual variables certifying S >= 0 on every causal model.

    h[o, y, z]; K[o, b, y, z]; G[y, z] and R[y, z] (order A<B<C only);
    J[b, y, z] (order B<A<C only).  Operators are 4x4 on A_I (x) A_O.
    """

    alpha: InequalityCoefficients
    h: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2)))
    K: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2, 2, 4, 4), dtype=complex))
    G: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 4, 4), dtype=complex))
    R: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 4, 4), dtype=complex))
    J: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2, 4, 4), dtype=complex))
    complete: bool = True

    @classmethod
    def from_alpha(cls, alpha: InequalityCoefficients) -> "DualCertificate":
        """A certificate carrying only alpha; verification reconstructs the rest."""
        return cls(alpha, complete=False)

    def sigma(self, order: str) -> np.ndarray:
        """sigma[b, y, z] for one causal order."""
        o = ORDERS.index(order)
        out = np.zeros((2, 2, 2, 4, 4), dtype=complex)
        eye = np.eye(4)
        for b, y, z in itertools.product(range(2), range(2), range(2)):
            s = self.h[o, y, z] * eye + self.K[o, b, y, z]
            if order == "A<B<C":
                s = s + no_signalling_part(self.G[y, z]) + self.R[y, z]
            else:
                s = s + no_signalling_part(self.J[b, y, z])
            out[b, y, z] = s
        return out


@dataclass
class CertificateCheck:
    ok: bool
    violations: list[str]
    min_eigenvalue: float
    normalization_residual: float | None

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class PrimalResult:
    eta_star: float
    models: tuple[Assemblage, Assemblage] | None
    solution: SdpSolution
    problem: SdpProblem

    def __iter__(self):
        yield self.eta_star
        yield self.models


@dataclass
class CertificationReport:
    eta_star: float
    S: float | None
    verdict: str
    status: str
    gap: float
    iterations: int
    certificate_valid: bool | None = None
    model_residual: float | None = None
    alpha: InequalityCoefficients | None = None
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eta_star": _finite_or_str(self.eta_star), "S": self.S, "verdict": self.verdict,
                "solver": {"status": self.status, "gap": _finite_or_str(self.gap), "iterations": self.iterations},
                "certificate_valid": self.certificate_valid, "model_residual": self.model_residual,
                "violations": self.violations}


def _finite_or_str(v):
    return v if v is None or np.isfinite(v) else str(v)


# -- SDP construction ----------------------------------------------------------

def _matrix_rows(problem: SdpProblem, terms, transform, tag):
    """Constrain E(W) = sum_k weight_k * transform(W_k) = 0 through 16 real rows.

    ``transform`` must be self-adjoint; row j has coefficient
    weight_k * transform(B_j) on block k.
    """
    for j, basis in enumerate(HERMITIAN_BASIS):
        tb = transform(basis)
        form = LinearForm()
        for name, weight in terms:
            form.add(name, tb, weight)
        problem.add_constraint(form, 0.0, tag + (j,))


def _identity(m):
    return m


def _add_causal_structure(problem: SdpProblem, normalise: bool):
    """All linear causal-model constraints on the two subnormalised branches."""
    for order in ORDERS:
        for b, y in itertools.product(range(2), range(2)):
            terms = [(block_name(order, b, c, y, 1), 1.0) for c in range(4)]
            terms += [(block_name(order, b, c, y, 0), -1.0) for c in range(4)]
            _matrix_rows(problem, terms, _identity, ("K", order, b, y))
        if order == "A<B<C":
            for y, z in [(0, 1), (1, 0), (1, 1)]:
                terms = [(block_name(order, b, c, y, z), 1.0) for b in range(2) for c in range(4)]
                terms += [(block_name(order, b, c, 0, 0), -1.0) for b in range(2) for c in range(4)]
                _matrix_rows(problem, terms, _identity, ("R", y, z))
            for y, z in itertools.product(range(2), range(2)):
                terms = [(block_name(order, b, c, y, z), 1.0) for b in range(2) for c in range(4)]
                _matrix_rows(problem, terms, no_signalling_part, ("G", y, z))
        else:
            for b, y, z in itertools.product(range(2), range(2), range(2)):
                terms = [(block_name(order, b, c, y, z), 1.0) for c in range(4)]
                _matrix_rows(problem, terms, no_signalling_part, ("J", b, y, z))
            eye = np.eye(4)
            for y, z in [(0, 1), (1, 0), (1, 1)]:
                form = LinearForm()
                for b, c in itertools.product(range(2), range(4)):
                    form.add(block_name(order, b, c, y, z), eye)
                    form.add(block_name(order, b, c, 0, 0), eye, -1.0)
                problem.add_constraint(form, 0.0, ("T", y, z))
    if normalise:
        form = LinearForm()
        for order in ORDERS:
            for b, c in itertools.product(range(2), range(4)):
                form.add(block_name(order, b, c, 0, 0), np.eye(4))
        problem.add_constraint(form, float(D_AO), ("norm",))


def _assemblage_blocks() -> list[Block]:
    return [Block(block_name(o, b, c, y, z), 4, complex=True) for o in ORDERS for b, c, y, z in _keys()]


def build_primal(p: ProbabilityTable, A_bar: InstrumentSet) -> SdpProblem:
    """maximise eta s.t. eta p + (1 - eta)/N_O = Tr(A_{a|x} w^causal_{bc|yz}), w causal.

    Rows are ordered probability-matching first, causal structure next and the
    overall trace normalisation last, so that the normalisation (implied by
    the others) is the one removed as redundant.
    """
    p = ProbabilityTable(p.values).validate()
    A = _alice_array(A_bar)
    problem = SdpProblem(_assemblage_blocks(), ["eta"], LinearForm(scalars={"eta": 1.0}), sense="max")
    u = 1.0 / N_OUTCOMES
    for x, y, z, a, b, c in np.ndindex(TABLE_SHAPE):
        form = LinearForm(scalars={"eta": -(p.values[x, y, z, a, b, c] - u)})
        for order in ORDERS:
            form.add(block_name(order, b, c, y, z), A[a, x])
        problem.add_constraint(form, u, ("prob", x, y, z, a, b, c))
    _add_causal_structure(problem, normalise=True)
    problem.metadata.update({"kind": "causal-robustness", "p_ref": p.values.copy(), "N_O": N_OUTCOMES})
    return problem


def build_min_S(alpha: InequalityCoefficients, A_bar: InstrumentSet) -> SdpProblem:
    """minimise S = sum alpha Tr(A w) over all normalised causal models."""
    A = _alice_array(A_bar)
    objective = LinearForm()
    for x, y, z, a, b, c in np.ndindex(TABLE_SHAPE):
        coef = alpha.alpha[x, y, z, a, b, c]
        if coef != 0.0:
            for order in ORDERS:
                objective.add(block_name(order, b, c, y, z), A[a, x], coef)
    problem = SdpProblem(_assemblage_blocks(), [], objective, sense="min")
    _add_causal_structure(problem, normalise=True)
    problem.metadata.update({"kind": "causal-min-S"})
    return problem


def _models_from_blocks(blocks: dict) -> tuple[Assemblage, Assemblage]:
    models = []
    for order in ORDERS:
        ops = np.zeros(ASSEMBLAGE_SHAPE + (4, 4), dtype=complex)
        for b, c, y, z in _keys():
            ops[b, c, y, z] = blocks[block_name(order, b, c, y, z)]
        models.append(Assemblage(order, 0.5 * (ops + np.conj(np.swapaxes(ops, -1, -2)))))
    return models[0], models[1]


def uniform_model() -> tuple[Assemblage, Assemblage]:
    """A causal model of white noise: w_{bc|yz} = 1/N_O on the A<B<C branch."""
    abc = np.zeros(ASSEMBLAGE_SHAPE + (4, 4), dtype=complex)
    abc[...] = np.eye(4) / N_OUTCOMES
    return Assemblage("A<B<C", abc), Assemblage("B<A<C", np.zeros_like(abc))


def solve_primal(problem: SdpProblem, tol: float = DEFAULT_TOL) -> PrimalResult:
    """Optimal robustness eta*; when eta* >= 1 also a causal model reproducing p."""
    sol = solve(problem, tol=tol)
    if sol.status == "unbounded":
        return PrimalResult(np.inf, uniform_model(), sol, problem)
    if sol.status not in ("optimal", "inaccurate"):
        raise SolverError(f"robustness SDP failed: {sol.status} ({sol.message})", sol)
    if sol.status == "inaccurate" and sol.gap > 1e-6:
        raise SolverError(f"robustness SDP did not converge (gap {sol.gap:.2e}, {sol.message})", sol)
    eta = sol.scalars["eta"]
    models = None
    if eta >= 1 - VERDICT_TOL:
        raw = _models_from_blocks(sol.primal_blocks)
        if eta > 1:
            # w_eta reproduces eta p + (1 - eta) u; mix back with the noise model
            noise = uniform_model()
            lam = 1.0 / eta
            raw = tuple(Assemblage(r.order, lam * r.operators + (1 - lam) * n.operators)
                        for r, n in zip(raw, noise))
        models = raw
    return PrimalResult(eta, models, sol, problem)


# -- dual side -----------------------------------------------------------------

def _multiplier_matrices(problem: SdpProblem, y: np.ndarray) -> dict:
    """Collect the multipliers of matrix-valued families into Hermitian matrices."""
    mats: dict = {}
    for con, val in zip(problem.constraints, y):
        tag = con.tag
        if tag is None or tag[0] == "prob":
            continue
        if tag[0] in ("K", "R", "G", "J"):
            key, j = tag[:-1], tag[-1]
            mats[key] = mats.get(key, 0) + val * HERMITIAN_BASIS[j]
        else:
            mats[tag] = mats.get(tag, 0.0) + val
    return mats


def extract_inequality(problem: SdpProblem, solution: SdpSolution,
                       tol: float = NORMALIZATION_TOL) -> InequalityCoefficients:
    """alpha from the multipliers of the probability-matching rows.

    With the maximisation convention the multipliers already satisfy
    S(p_ref) = eta* - 1; the normalisation identity is checked, not imposed.
    """
    if solution.dual_multipliers is None or len(solution.dual_multipliers) != len(problem.constraints):
        raise ValueError("solution carries no dual multipliers for this problem")
    if solution.status not in ("optimal", "inaccurate"):
        raise ValueError(f"cannot extract an inequality from a {solution.status} solution")
    alpha = np.zeros(TABLE_SHAPE)
    found = 0
    for con, val in zip(problem.constraints, solution.dual_multipliers):
        if con.tag is not None and con.tag[0] == "prob":
            alpha[con.tag[1:]] = val
            found += 1
    if found != alpha.size:
        raise ValueError("problem has no probability-matching rows")
    p_ref = ProbabilityTable(problem.metadata["p_ref"])
    coeffs = InequalityCoefficients(alpha, problem.metadata.get("N_O", N_OUTCOMES), p_ref)
    coeffs.S_ref = evaluate_S(coeffs, p_ref)
    resid = coeffs.normalization_residual()
    if abs(resid) > tol * max(1.0, np.max(np.abs(alpha))):
        raise ValueError(f"dual normalisation violated by {resid:.3e}; solver inaccurate")
    return coeffs


def _certificate_from_multipliers(problem: SdpProblem, solution: SdpSolution,
                                  alpha: InequalityCoefficients) -> DualCertificate:
    # structure multipliers enter the dual slack as -sigma (max) or +sigma (min)
    sign = -1.0 if problem.sense == "max" else 1.0
    mats = _multiplier_matrices(problem, sign * np.asarray(solution.dual_multipliers))
    cert = DualCertificate(alpha)
    zero = np.zeros((4, 4), dtype=complex)
    for o, order in enumerate(ORDERS):
        for b, y in itertools.product(range(2), range(2)):
            L = mats.get(("K", order, b, y), zero)
            cert.K[o, b, y, 1] = L
            cert.K[o, b, y, 0] = -L
    for y, z in [(0, 1), (1, 0), (1, 1)]:
        N = mats.get(("R", y, z), zero)
        cert.R[y, z] = N
        cert.R[0, 0] -= N
        t = mats.get(("T", y, z), 0.0)
        cert.h[1, y, z] = t
        cert.h[1, 0, 0] -= t
    for y, z in itertools.product(range(2), range(2)):
        cert.G[y, z] = mats.get(("G", y, z), zero)
    for b, y, z in itertools.product(range(2), range(2), range(2)):
        cert.J[b, y, z] = mats.get(("J", b, y, z), zero)
    nu = mats.get(("norm",), 0.0)
    cert.h[0, 0, 0] += nu
    cert.h[1, 0, 0] += nu
    return cert


def extract_certificate(problem: SdpProblem, solution: SdpSolution,
                        alpha: InequalityCoefficients | None = None) -> DualCertificate:
    """Structured dual certificate (alpha, h, K, G, J, R) from a solved robustness SDP."""
    if alpha is None:
        alpha = extract_inequality(problem, solution)
    return _certificate_from_multipliers(problem, solution, alpha)


def minimum_over_causal_models(alpha: InequalityCoefficients, A_bar: InstrumentSet, tol: float = DEFAULT_TOL):
    """min S over all causal models, with the dual certificate of that bound."""
    problem = build_min_S(alpha, A_bar)
    sol = solve(problem, tol=tol)
    if sol.status not in ("optimal", "inaccurate"):
        raise SolverError(f"min-S SDP failed: {sol.status} ({sol.message})", sol)
    return sol.primal_objective, problem, sol


def reconstruct_certificate(alpha: InequalityCoefficients, A_bar: InstrumentSet):
    """Find auxiliaries for a bare alpha; returns (certificate, min S over causal models)."""
    s_min, problem, sol = minimum_over_causal_models(alpha, A_bar)
    cert = _certificate_from_multipliers(problem, sol, alpha)
    # the bound value sits in h at (0,0); move it out so sum_yz h = 0 as required
    nu = cert.h[0].sum()
    cert.h[0, 0, 0] -= nu
    cert.h[1, 0, 0] -= cert.h[1].sum()
    return cert, s_min


def verify_certificate(cert: DualCertificate, A_bar: InstrumentSet, tol: float = CERTIFICATE_TOL,
                       p_ref: ProbabilityTable | None = None) -> CertificateCheck:
    """Independent check of every structured dual constraint.

    Bare-alpha certificates have their auxiliaries reconstructed by a
    secondary SDP first.  The normalisation equality is checked against
    ``p_ref`` (default: the table alpha was derived from) when one is known.
    """
    A = _alice_array(A_bar)
    alpha = cert.alpha
    violations = []
    if not cert.complete:
        cert, _ = reconstruct_certificate(alpha, A_bar)
    arrays = {"h": cert.h, "K": cert.K, "G": cert.G, "R": cert.R, "J": cert.J, "alpha": alpha.alpha}
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            violations.append(f"{name} has non-finite entries")
    for name in ("K", "G", "R", "J"):
        arr = arrays[name]
        if np.max(np.abs(arr - np.conj(np.swapaxes(arr, -1, -2))), initial=0.0) > tol:
            violations.append(f"{name} operators are not Hermitian")
    for o, order in enumerate(ORDERS):
        if abs(cert.h[o].sum()) > tol:
            violations.append(f"sum_yz h[{order}] = {cert.h[o].sum():.3e} != 0")
        ksum = np.max(np.abs(cert.K[o].sum(axis=2)))
        if ksum > tol:
            violations.append(f"sum_z K[{order}] = {ksum:.3e} != 0")
    rsum = np.max(np.abs(cert.R.sum(axis=(0, 1))))
    if rsum > tol:
        violations.append(f"sum_yz R = {rsum:.3e} != 0")

    # sum_{ax} alpha^{abc}_{xyz} A_{a|x} - sigma_{b|yz} >= 0 for each order
    lin = np.einsum("xyzabc,axij->bcyzij", alpha.alpha, A)
    min_eig = np.inf
    for order in ORDERS:
        sig = cert.sigma(order)
        for b, c, y, z in _keys():
            mat = lin[b, c, y, z] - sig[b, y, z]
            mat = 0.5 * (mat + mat.conj().T)
            lam = float(np.linalg.eigvalsh(mat)[0])
            min_eig = min(min_eig, lam)
            if lam < -tol:
                violations.append(f"PSD[{order}][b={b},c={c},y={y},z={z}]: min eigenvalue {lam:.3e}")

    p_ref = alpha.p_ref if p_ref is None else p_ref
    resid = None
    if p_ref is not None:
        resid = alpha.normalization_residual(p_ref)
        if abs(resid) > tol * max(1.0, np.max(np.abs(alpha.alpha))):
            violations.append(f"normalization: (1/N_O) sum alpha - 1 - sum alpha p_ref = {resid:.3e}")
    return CertificateCheck(not violations, violations, min_eig, resid)


def certify(p: ProbabilityTable, A_bar: InstrumentSet, tol: float = VERDICT_TOL) -> CertificationReport:
    """Primal robustness, dual inequality and certificate check in one pass."""
    problem = build_primal(p, A_bar)
    result = solve_primal(problem)
    sol = result.solution
    if not np.isfinite(result.eta_star):
        resid = float(np.max(np.abs(model_probabilities(result.models, A_bar).values - p.values)))
        return CertificationReport(np.inf, None, VERDICT_CAUSAL, sol.status, 0.0, sol.iterations,
                                   None, resid)
    alpha = extract_inequality(problem, sol)
    S = evaluate_S(alpha, p)
    check = verify_certificate(extract_certificate(problem, sol, alpha), A_bar)
    eta = result.eta_star
    resid = None
    violations = list(check.violations)
    if result.models is not None:
        resid = float(np.max(np.abs(model_probabilities(result.models, A_bar).values - p.values)))
        violations += causal_model_violations(result.models)
    if eta >= 1 - tol and result.models is not None and resid <= 1e-6:
        verdict = VERDICT_CAUSAL
    elif eta < 1 - tol and S < -tol and check.ok:
        verdict = VERDICT_INDEFINITE
    else:
        verdict = VERDICT_INCONCLUSIVE
    return CertificationReport(eta, S, verdict, sol.status, sol.gap, sol.iterations, check.ok, resid,
                               alpha, violations)
