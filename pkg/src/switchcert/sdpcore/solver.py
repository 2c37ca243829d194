"""Primal-dual interior-point method for block SDPs.

Standard form after ``embed_complex``::

    maximise   <C, X>            minimise   b.y
    s.t.       A(X) = b          s.t.       A^T(y) - C = Z
               X >= 0                       Z >= 0

Free scalars u enter as ``A(X) + F u = b`` with ``F^T y = c_u`` on the dual
side.  They are kept as unconstrained variables inside the iteration (an
augmented Newton system) rather than split into two PSD halves, whose slacks
would both vanish at the optimum and ruin the conditioning of the Schur
complement.

The search direction is HKM (H..K..M symmetrisation of X Z = mu I) with a
Mehrotra predictor-corrector step.  Linearly dependent equalities are removed
before iterating; their multipliers are reported as zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .embed import embed_complex, unembed_hermitian
from .problem import SdpProblem, SdpSolution

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
_DEPENDENCY_TOL = 1e-10
_INFEASIBILITY_SCALE = 1e8
_REFINEMENT_STEPS = 2
_STALL_ITERATIONS = 15


class SolverError(RuntimeError):
    """Raised when a solve cannot produce a usable answer."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class _Data:
    dims: list[int]
    C: list[np.ndarray]
    rows: list[np.ndarray]       # constraint indices touching each block
    A: list[np.ndarray]          # (len(rows), n, n) coefficient stacks
    b: np.ndarray
    F: np.ndarray                # (m, f) free-scalar columns
    cf: np.ndarray               # (f,) free-scalar objective

    @property
    def m(self) -> int:
        return len(self.b)

    def op(self, X) -> np.ndarray:
        out = np.zeros(self.m)
        for r, a, x in zip(self.rows, self.A, X):
            if len(r):
                out[r] += np.einsum("kij,ij->k", a, x)
        return out

    def adj(self, y) -> list[np.ndarray]:
        return [np.tensordot(y[r], a, axes=1) if len(r) else np.zeros((n, n))
                for r, a, n in zip(self.rows, self.A, self.dims)]

    def restrict(self, keep: np.ndarray) -> "_Data":
        index = -np.ones(self.m, dtype=int)
        index[keep] = np.arange(len(keep))
        rows, A = [], []
        for r, a in zip(self.rows, self.A):
            sel = index[r] >= 0
            rows.append(index[r][sel])
            A.append(a[sel])
        return _Data(self.dims, self.C, rows, A, self.b[keep], self.F[keep], self.cf)


def _build_data(std: SdpProblem) -> tuple[_Data, list[str]]:
    """Real data of an embedded problem; min problems are negated into max form."""
    names = [b.name for b in std.blocks]
    pos = {n: i for i, n in enumerate(names)}
    sign = 1.0 if std.sense == "max" else -1.0
    dims = [b.dim for b in std.blocks]
    C = [np.zeros((n, n)) for n in dims]
    for k, c in std.objective.coeffs.items():
        C[pos[k]] = sign * np.asarray(c, dtype=float)
    per_block_rows = [[] for _ in dims]
    per_block_mats = [[] for _ in dims]
    for i, con in enumerate(std.constraints):
        for k, c in con.coeffs.items():
            c = np.asarray(c, dtype=float)
            if np.any(c):
                per_block_rows[pos[k]].append(i)
                per_block_mats[pos[k]].append(c)
    rows = [np.array(r, dtype=int) for r in per_block_rows]
    A = [np.array(mats).reshape(len(mats), n, n) for mats, n in zip(per_block_mats, dims)]
    b = np.array([c.rhs for c in std.constraints], dtype=float)
    F = np.array([[c.scalars.get(s, 0.0) for s in std.free_scalars] for c in std.constraints],
                 dtype=float).reshape(len(b), len(std.free_scalars))
    cf = sign * np.array([std.objective.scalars.get(s, 0.0) for s in std.free_scalars], dtype=float)
    return _Data(dims, C, rows, A, b, F, cf), names


def _dense_rows(data: _Data) -> np.ndarray:
    offsets = np.cumsum([0] + [n * n for n in data.dims])
    dense = np.zeros((data.m, offsets[-1] + data.F.shape[1]))
    for k, (r, a) in enumerate(zip(data.rows, data.A)):
        if len(r):
            dense[r, offsets[k]:offsets[k + 1]] = a.reshape(len(r), -1)
    dense[:, offsets[-1]:] = data.F
    return dense


def independent_rows(data: _Data, tol: float = _DEPENDENCY_TOL):
    """Greedy in-order selection of linearly independent equality rows.

    Returns (kept indices, dropped indices, consistent flag).  A row is
    dropped when its distance to the span of the earlier kept rows is below
    ``tol`` relative to its own norm.
    """
    dense = _dense_rows(data)
    if data.m == 0:
        return np.arange(0), np.arange(0), True
    norms = np.linalg.norm(dense, axis=1)
    _, r = sla.qr(dense.T, mode="economic")
    diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
    diag = np.concatenate([diag, np.zeros(data.m - len(diag))])
    dependent = diag <= tol * np.maximum(norms, 1.0)
    kept = np.flatnonzero(~dependent)
    dropped = np.flatnonzero(dependent)
    consistent = True
    if len(dropped):
        coef, *_ = np.linalg.lstsq(dense[kept].T, dense[dropped].T, rcond=None)
        implied = coef.T @ data.b[kept]
        consistent = bool(np.all(np.abs(implied - data.b[dropped])
                                 <= 1e-8 * (1 + np.abs(data.b[dropped]))))
    return kept, dropped, consistent


def _sym(m):
    return 0.5 * (m + m.swapaxes(-1, -2))


def _max_step(X, dX) -> float:
    """Largest alpha with X + alpha dX PSD (inf if unbounded)."""
    step = np.inf
    for x, d in zip(X, dX):
        if x.shape[0] == 1:
            if d[0, 0] < 0:
                step = min(step, -x[0, 0] / d[0, 0])
            continue
        try:
            L = np.linalg.cholesky(x)
            Li = sla.solve_triangular(L, np.eye(len(x)), lower=True)
            lam = np.linalg.eigvalsh(Li @ d @ Li.T)[0]
        except np.linalg.LinAlgError:
            # numerically singular iterate: fall back to the eigenbasis of x
            w, v = np.linalg.eigh(x)
            s = 1.0 / np.sqrt(np.maximum(w, np.finfo(float).tiny))
            lam = np.linalg.eigvalsh((v * s).T @ d @ (v * s))[0]
        if lam < 0:
            step = min(step, -1.0 / lam)
    return step


def _inner(P, Q) -> float:
    return float(sum(np.vdot(p, q).real for p, q in zip(P, Q)))


def _initial_point(data: _Data):
    X, Z = [], []
    normC = [np.linalg.norm(c) for c in data.C]
    for k, n in enumerate(data.dims):
        a = data.A[k]
        r = data.rows[k]
        anorm = np.linalg.norm(a.reshape(len(r), -1), axis=1) if len(r) else np.zeros(0)
        xi = max(10.0, np.sqrt(n))
        if len(r):
            xi = max(xi, n * np.max((1 + np.abs(data.b[r])) / (1 + anorm)))
        zeta = max(10.0, np.sqrt(n), normC[k], np.max(anorm, initial=0.0))
        X.append(xi * np.eye(n))
        Z.append(zeta * np.eye(n))
    return X, np.zeros(data.m), Z


def _schur(data: _Data, X, Zinv) -> np.ndarray:
    M = np.zeros((data.m, data.m))
    for r, a, x, zi in zip(data.rows, data.A, X, Zinv):
        if not len(r):
            continue
        t = x @ a @ zi                      # X A_j Z^-1 for every row j of this block
        M[np.ix_(r, r)] += a.reshape(len(r), -1) @ t.transpose(0, 2, 1).reshape(len(r), -1).T
    return 0.5 * (M + M.T)


def _factor(M):
    try:
        return ("chol", sla.cho_factor(M, lower=True, check_finite=False))
    except np.linalg.LinAlgError:
        reg = 1e-12 * max(1.0, np.max(np.abs(np.diag(M))))
        try:
            return ("chol", sla.cho_factor(M + reg * np.eye(len(M)), lower=True, check_finite=False))
        except np.linalg.LinAlgError:
            return ("lstsq", M)


def _solve(fac, rhs):
    kind, f = fac
    if kind == "chol":
        return sla.cho_solve(f, rhs, check_finite=False)
    return np.linalg.lstsq(f, rhs, rcond=None)[0]


def _interior_point(data: _Data, tol: float, max_iter: int, record: bool):
    n_total = sum(data.dims)
    X, y, Z = _initial_point(data)
    u = np.zeros(data.F.shape[1])
    normb = np.linalg.norm(data.b)
    normC = np.sqrt(sum(np.linalg.norm(c) ** 2 for c in data.C) + np.sum(data.cf ** 2))
    history = []
    status, message = "inaccurate", "iteration limit reached"
    it = 0
    best = None
    for it in range(max_iter + 1):
        ATy = data.adj(y)
        rp = data.b - data.op(X) - data.F @ u
        Rd = [aty - c - z for aty, c, z in zip(ATy, data.C, Z)]
        rf = data.cf - data.F.T @ y
        pobj = _inner(data.C, X) + float(data.cf @ u)
        dobj = float(data.b @ y)
        comp = _inner(X, Z)
        pinf = np.linalg.norm(rp) / (1 + normb)
        dinf = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in Rd) + np.sum(rf ** 2)) / (1 + normC)
        relgap = max(comp, abs(pobj - dobj)) / (1 + abs(pobj) + abs(dobj))
        if record:
            history.append({"iteration": it, "primal_objective": pobj, "dual_objective": dobj,
                            "complementarity": comp, "primal_infeasibility": float(pinf),
                            "dual_infeasibility": float(dinf)})
        err = max(relgap, pinf, dinf)
        if best is None or err < best[0]:
            best = (err, [x.copy() for x in X], u.copy(), y.copy(), [z.copy() for z in Z], it)
        if err <= tol:
            status, message = "optimal", "converged"
            break
        if it - best[5] >= _STALL_ITERATIONS:
            message = f"stalled at relative error {best[0]:.2e}"
            break
        # infeasibility certificates along diverging iterates
        if dobj < -_INFEASIBILITY_SCALE * (1 + normC):
            lam = min((np.linalg.eigvalsh(a)[0] for a in ATy), default=0.0)
            if lam / abs(dobj) > -1e-8 and np.linalg.norm(data.F.T @ y) / abs(dobj) < 1e-8:
                status, message = "infeasible", "primal infeasibility certificate found"
                break
        if pobj > _INFEASIBILITY_SCALE * (1 + normb):
            if np.linalg.norm(rp) * (1 + normb) / pobj < 1e-8:
                status, message = "unbounded", "primal improving ray found"
                break
        if it == max_iter:
            break

        mu = comp / n_total
        Zinv = [_sym(np.linalg.inv(z)) for z in Z]
        fac = _factor(_schur(data, X, Zinv))
        MinvF = _solve(fac, data.F) if data.F.size else data.F
        fac_u = _factor(data.F.T @ MinvF) if data.F.size else None

        def direction(sigma_mu, corr):
            G = [sigma_mu * zi - x - _sym(x @ rd @ zi) for x, rd, zi in zip(X, Rd, Zinv)]
            if corr is not None:
                G = [g - c for g, c in zip(G, corr)]
            # [M  -F; F^T  0] [dy; du] = [A(G) - rp; rf]
            du, dy = augmented(data.op(G) - rp, rf)
            for _ in range(_REFINEMENT_STEPS):
                # refine against the true primal equation A(dX) + F du = rp
                dX = [g - _sym(x @ a @ zi) for g, x, a, zi in zip(G, X, data.adj(dy), Zinv)]
                e = rp - data.op(dX) - data.F @ du
                if np.linalg.norm(e) <= 1e-14 * (1 + normb):
                    break
                ddu, ddy = augmented(-e, data.cf - data.F.T @ (y + dy))
                du, dy = du + ddu, dy + ddy
            ATdy = data.adj(dy)
            dZ = [a + rd for a, rd in zip(ATdy, Rd)]
            dX = [g - _sym(x @ a @ zi) for g, x, a, zi in zip(G, X, ATdy, Zinv)]
            return dX, du, dy, dZ

        def augmented(h, r):
            Minv_h = _solve(fac, h)
            if fac_u is None:
                return np.zeros(0), Minv_h
            du = _solve(fac_u, r - data.F.T @ Minv_h)
            return du, Minv_h + MinvF @ du

        dXa, dua, dya, dZa = direction(0.0, None)
        ap = min(1.0, _max_step(X, dXa))
        ad = min(1.0, _max_step(Z, dZa))
        mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [z + ad * d for z, d in zip(Z, dZa)]) / n_total
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        corr = [_sym(dx @ dz @ zi) for dx, dz, zi in zip(dXa, dZa, Zinv)]
        dX, du, dy, dZ = direction(sigma * mu, corr)
        gamma = 0.9 + 0.09 * min(ap, ad)
        ap = min(1.0, gamma * _max_step(X, dX))
        ad = min(1.0, gamma * _max_step(Z, dZ))
        X = [_sym(x + ap * d) for x, d in zip(X, dX)]
        u = u + ap * du
        y = y + ad * dy
        Z = [_sym(z + ad * d) for z, d in zip(Z, dZ)]
    if status == "inaccurate" and best is not None:
        _, X, u, y, Z, _ = best
    return X, u, y, Z, status, message, it, history


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          record_history: bool = False) -> SdpSolution:
    """Solve ``problem`` to relative gap and infeasibility ``tol``.

    Deterministic for identical inputs.  Infeasible and unbounded problems
    are reported through ``status``; an exhausted iteration budget yields
    status ``inaccurate`` with the best iterate.
    """
    problem.validate()
    std = embed_complex(problem)
    data, names = _build_data(std)
    m_full = data.m

    kept, dropped, consistent = independent_rows(data)
    if not consistent:
        return _empty_solution(problem, "infeasible", "inconsistent linear equalities", m_full)
    work = data.restrict(kept)

    # variables no constraint touches are unbounded if the objective improves along them
    rays = [names[k] for k, r in enumerate(work.rows)
            if len(r) == 0 and np.linalg.eigvalsh(work.C[k])[-1] > 1e-12]
    rays += [s for j, s in enumerate(std.free_scalars)
             if not np.any(work.F[:, j]) and work.cf[j] != 0.0]
    if rays:
        probe = _Data(work.dims, [np.zeros_like(c) for c in work.C], work.rows, work.A, work.b,
                      work.F, np.zeros_like(work.cf))
        X, u, y, Z, status, message, it, history = _interior_point(probe, tol, max_iter, record_history)
        if status != "optimal":
            return _empty_solution(problem, "infeasible", "feasibility probe failed: " + message, m_full)
        sol = _package(problem, std, names, X, u, np.zeros(len(kept)), Z, kept, m_full, "unbounded",
                       f"objective increases without bound along {rays}", it, history, data)
        sol.primal_objective = np.inf if problem.sense == "max" else -np.inf
        sol.dual_objective = sol.primal_objective
        return sol

    X, u, y, Z, status, message, it, history = _interior_point(work, tol, max_iter, record_history)
    log.debug("sdp solve: %s after %d iterations (%s)", status, it, message)
    return _package(problem, std, names, X, u, y, Z, kept, m_full, status, message, it, history, data)


def _package(problem, std, names, X, u, y_kept, Z, kept, m_full, status, message, it, history, data):
    sign = 1.0 if problem.sense == "max" else -1.0
    y = np.zeros(m_full)
    y[kept] = y_kept
    xs = dict(zip(names, X))
    zs = dict(zip(names, Z))
    blocks, slacks = {}, {}
    for b in problem.blocks:
        if b.complex:
            blocks[b.name] = unembed_hermitian(xs[b.name])
            slacks[b.name] = 2.0 * unembed_hermitian(zs[b.name])
        else:
            blocks[b.name] = xs[b.name]
            slacks[b.name] = zs[b.name]
    scalars = {s: float(v) for s, v in zip(std.free_scalars, u)}
    pobj = problem.objective.evaluate(blocks, scalars)
    dobj = sign * float(data.b @ y)
    comp = _inner(X, Z)
    rp = data.b - data.op(X) - data.F @ u
    Rd = [a - c - z for a, c, z in zip(data.adj(y), data.C, Z)]
    rf = data.cf - data.F.T @ y
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    return SdpSolution(
        status=status,
        primal_objective=pobj,
        dual_objective=dobj,
        primal_blocks=blocks,
        scalars=scalars,
        dual_multipliers=sign * y,
        dual_slacks=slacks,
        gap=max(gap, comp / (1 + abs(pobj) + abs(dobj))),
        iterations=it,
        primal_residual=float(np.max(np.abs(rp), initial=0.0)),
        dual_residual=float(max(max((np.max(np.abs(r)) for r in Rd), default=0.0),
                                np.max(np.abs(rf), initial=0.0))),
        history=history,
        message=message,
    )


def _empty_solution(problem, status, message, m):
    blocks = {b.name: np.zeros((b.dim, b.dim), dtype=complex if b.complex else float) for b in problem.blocks}
    return SdpSolution(status, np.nan, np.nan, blocks, {s: np.nan for s in problem.free_scalars},
                       np.zeros(m), dict(blocks), np.inf, 0, message=message)
