"""Independent reference solvers used only by the tests."""
import numpy as np
import pytest


def solve_with_cvxpy(problem, eps=1e-9):
    """Optimal value of an SdpProblem through cvxpy/SCS; skips the test without cvxpy."""
    cp = pytest.importorskip("cvxpy")
    X = {}
    complex_block = {b.name: b.complex for b in problem.blocks}
    cons = []
    for b in problem.blocks:
        v = cp.Variable((b.dim, b.dim), hermitian=True) if b.complex else cp.Variable((b.dim, b.dim), symmetric=True)
        X[b.name] = v
        cons.append(v >> 0)
    t = {s: cp.Variable() for s in problem.free_scalars}

    def expr(form):
        terms = []
        for k, c in form.coeffs.items():
            tr = cp.trace(np.asarray(c) @ X[k])
            terms.append(cp.real(tr) if complex_block[k] else tr)
        terms += [v * t[s] for s, v in form.scalars.items()]
        return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)

    cons += [expr(c) == c.rhs for c in problem.constraints]
    obj = cp.Maximize(expr(problem.objective)) if problem.sense == "max" else cp.Minimize(expr(problem.objective))
    prob = cp.Problem(obj, cons)
    prob.solve(solver=cp.SCS, eps=eps, max_iters=200000)
    return prob.value, prob.status
