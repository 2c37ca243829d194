import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchcert import qmat
from switchcert.qmat import KET0, KET_PLUS, PAULI_Z, TensorSpace


def rand_herm(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return m + m.conj().T


def rand_psd(rng, d, rank=None):
    g = rng.normal(size=(d, rank or d)) + 1j * rng.normal(size=(d, rank or d))
    return g @ g.conj().T


def test_kron_examples():
    assert np.array_equal(qmat.kron([PAULI_Z, PAULI_Z]), np.diag([1, -1, -1, 1]))
    assert np.array_equal(qmat.kron([np.eye(2)]), np.eye(2))
    m = qmat.kron([qmat.projector(KET0), qmat.projector(KET_PLUS)])
    expected = np.zeros((4, 4))
    expected[:2, :2] = 0.5
    assert np.allclose(m, expected, atol=1e-15)


def test_kron_rejects_bad_input():
    with pytest.raises(ValueError):
        qmat.kron([])
    with pytest.raises(ValueError):
        qmat.kron([np.array([[np.nan]])])


def test_tensor_space():
    sp = TensorSpace(("A", "B", "C"), (2, 3, 2))
    assert sp.dim == 12
    assert sp.index("B") == 1
    assert sp.subspace(["C", "A"]).labels == ("A", "C")
    with pytest.raises(ValueError):
        TensorSpace(("A", "A"), (2, 2))
    with pytest.raises(ValueError):
        TensorSpace(("A",), (0,))


def test_partial_trace_examples():
    sp = TensorSpace(("I", "O"), (2, 2))
    choi = qmat.projector(qmat.max_entangled(2))
    assert np.allclose(qmat.partial_trace(choi, sp, ["I"]), np.eye(2))
    m = np.arange(16).reshape(4, 4).astype(complex)
    assert np.allclose(qmat.partial_trace(m, sp, []), [[np.trace(m)]])


def test_partial_trace_matches_explicit_sum():
    rng = np.random.default_rng(3)
    sp = TensorSpace(("A", "B", "C"), (2, 3, 2))
    m = rand_herm(rng, 12)
    t = m.reshape(2, 3, 2, 2, 3, 2)
    # keep A and C by summing the B diagonal by hand
    expected = np.zeros((2, 2, 2, 2), dtype=complex)
    for b in range(3):
        expected += t[:, b, :, :, b, :]
    assert np.allclose(qmat.partial_trace(m, sp, ["A", "C"]), expected.reshape(4, 4), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_partial_trace_of_product(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = rand_herm(rng, da), rand_herm(rng, db)
    sp = TensorSpace(("A", "B"), (da, db))
    ab = qmat.kron([a, b])
    assert np.allclose(qmat.partial_trace(ab, sp, ["A"]), np.trace(b) * a, atol=1e-10)
    assert np.allclose(qmat.partial_trace(ab, sp, ["B"]), np.trace(a) * b, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kron_associative_and_trace_multiplicative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rand_herm(rng, 2), rand_herm(rng, 3), rand_herm(rng, 2)
    assert np.allclose(qmat.kron([qmat.kron([a, b]), c]), qmat.kron([a, qmat.kron([b, c])]), atol=1e-12)
    assert abs(np.trace(qmat.kron([a, b])) - np.trace(a) * np.trace(b)) <= 1e-12 * (1 + abs(np.trace(a) * np.trace(b)))


def test_permute_operator_roundtrip():
    rng = np.random.default_rng(5)
    sp = TensorSpace(("A", "B", "C"), (2, 3, 2))
    a, b, c = rand_herm(rng, 2), rand_herm(rng, 3), rand_herm(rng, 2)
    m = qmat.kron([a, b, c])
    p = qmat.permute_operator(m, sp, ["C", "A", "B"])
    assert np.allclose(p, qmat.kron([c, a, b]), atol=1e-12)
    back = qmat.permute_operator(p, TensorSpace(("C", "A", "B"), (2, 2, 3)), ["A", "B", "C"])
    assert np.allclose(back, m, atol=1e-12)


def test_permute_vector():
    v = qmat.kron_vectors([KET0, KET_PLUS])
    sp = TensorSpace(("A", "B"), (2, 2))
    assert np.allclose(qmat.permute_vector(v, sp, ["B", "A"]), qmat.kron_vectors([KET_PLUS, KET0]))


def test_local_operator():
    sp = TensorSpace(("A", "B", "C"), (2, 2, 2))
    assert np.allclose(qmat.local_operator(sp, "B", PAULI_Z), qmat.kron([np.eye(2), PAULI_Z, np.eye(2)]))


def test_small_helpers():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose(qmat.dagger(qmat.dagger(m)), m)
    assert qmat.trace(np.eye(4)) == 4
    assert abs(np.trace(qmat.projector(qmat.max_entangled(2))) - 2) < 1e-15


def test_is_psd_examples():
    assert qmat.is_psd(np.eye(2))
    assert not qmat.is_psd(-np.eye(2))
    with pytest.raises(ValueError):
        qmat.is_psd(np.array([[0, 1], [0, 0]]))


def _minors_psd(m, tol=1e-9):
    # Sylvester-type criterion: every principal minor nonnegative
    n = len(m)
    import itertools
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            if np.linalg.det(m[np.ix_(idx, idx)]).real < -tol:
                return False
    return True


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]), st.floats(-3, 3))
def test_is_psd_agrees_with_principal_minors(seed, d, shift):
    rng = np.random.default_rng(seed)
    m = rand_psd(rng, d, rank=1) / d + shift * np.eye(d)
    lam = np.linalg.eigvalsh(m)[0]
    if abs(lam) < 1e-6:
        return  # too close to the boundary for a determinant comparison
    assert qmat.is_psd(m) == _minors_psd(m)


def test_fidelity_examples():
    p = qmat.projector(KET_PLUS)
    assert qmat.fidelity_with_pure(p, p) == pytest.approx(1.0, abs=1e-15)
    assert qmat.fidelity_with_pure(qmat.projector(KET0), np.eye(2) / 2) == pytest.approx(0.5, abs=1e-15)
    target = qmat.kron([qmat.projector(KET0)] * 2)
    pdep = 0.01
    rho = (1 - pdep) * target + pdep * np.eye(4) / 4
    assert qmat.fidelity_with_pure(target, rho) == pytest.approx((1 - pdep) + pdep / 4, abs=1e-15)


def test_fidelity_rejects_bad_inputs():
    p = qmat.projector(KET0)
    with pytest.raises(ValueError):
        qmat.fidelity_with_pure(p, np.eye(2))  # trace 2
    with pytest.raises(ValueError):
        qmat.fidelity_with_pure(np.eye(2) / 2, p)  # target not rank one
    with pytest.raises(ValueError):
        qmat.fidelity_with_pure(p, np.diag([1.5, -0.5]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_fidelity_linear_and_maximal_only_at_target(seed, lam):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    target = qmat.projector(psi / np.linalg.norm(psi))
    r1, r2 = rand_psd(rng, 4), rand_psd(rng, 4)
    r1, r2 = r1 / np.trace(r1), r2 / np.trace(r2)
    mix = lam * r1 + (1 - lam) * r2
    f = qmat.fidelity_with_pure
    assert f(target, mix) == pytest.approx(lam * f(target, r1) + (1 - lam) * f(target, r2), abs=1e-12)
    phi = rng.normal(size=4) + 1j * rng.normal(size=4)
    other = qmat.projector(phi / np.linalg.norm(phi))
    assert f(target, target) == pytest.approx(1.0, abs=1e-12)
    assert f(target, other) < 1 - 1e-9
