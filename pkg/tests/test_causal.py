import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchcert import causal, switch
from switchcert.switch import ProbabilityTable

from .oracles import solve_with_cvxpy

ETA_IDEAL = 0.92064527  # independent cvxpy/SCS solve of the same program
SEPARABLE_Q = (0.0, 0.25, 0.5, 0.75, 1.0)


def uniform_table():
    return ProbabilityTable.uniform()


def test_ideal_robustness(ideal_solved):
    problem, result, alpha, cert = ideal_solved
    assert result.solution.status == "optimal"
    assert result.eta_star == pytest.approx(ETA_IDEAL, abs=1e-6)
    assert result.solution.gap <= 1e-7


def test_ideal_robustness_matches_external_solver(alice, ideal):
    value, status = solve_with_cvxpy(causal.build_primal(ideal, alice), eps=1e-10)
    assert status.startswith("optimal")
    assert value == pytest.approx(ETA_IDEAL, abs=1e-5)


def test_strong_duality(ideal_solved, ideal):
    _, result, alpha, _ = ideal_solved
    S = causal.evaluate_S(alpha, ideal)
    assert S == pytest.approx(-0.0794, abs=5e-4)
    assert abs(result.eta_star - (1 + S)) <= 1e-6


def test_certificate_of_ideal_table_is_valid(ideal_solved, alice):
    _, _, alpha, cert = ideal_solved
    check = causal.verify_certificate(cert, alice)
    assert check.ok, check.violations
    assert abs(check.normalization_residual) <= 1e-9


def test_uniform_table_scores_sum_alpha_over_outcomes(ideal_solved):
    _, _, alpha, _ = ideal_solved
    S_u = causal.evaluate_S(alpha, uniform_table())
    assert S_u == pytest.approx(alpha.alpha.sum() / 16, abs=1e-12)
    assert S_u == pytest.approx(ETA_IDEAL, abs=1e-6)
    assert S_u >= 0


def test_remixed_table_sits_on_the_boundary(ideal_solved, ideal, alice):
    _, result, alpha, _ = ideal_solved
    eta = result.eta_star
    remixed = ProbabilityTable.mix(ideal, uniform_table(), eta)
    assert causal.evaluate_S(alpha, remixed) == pytest.approx(0.0, abs=1e-6)
    again = causal.solve_primal(causal.build_primal(remixed, alice))
    assert again.eta_star == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("q", SEPARABLE_Q)
def test_separable_references_admit_causal_models(q, instruments, alice):
    p = switch.born_probabilities(switch.build_separable_reference(q), *instruments)
    report = causal.certify(p, alice)
    assert report.verdict == causal.VERDICT_CAUSAL
    assert report.eta_star >= 1 - 1e-6
    assert report.model_residual <= 1e-7
    assert report.violations == []
    if report.S is not None:
        assert report.S >= -1e-7


def test_fully_dephased_switch_is_causal(alice):
    report = causal.certify(switch.ideal_table(0.0), alice)
    assert report.verdict == causal.VERDICT_CAUSAL
    assert report.model_residual <= 1e-7


def test_uniform_table_is_unbounded_and_causal(alice):
    problem = causal.build_primal(uniform_table(), alice)
    result = causal.solve_primal(problem)
    assert result.eta_star == np.inf
    assert causal.causal_model_violations(result.models) == []
    report = causal.certify(uniform_table(), alice)
    assert report.verdict == causal.VERDICT_CAUSAL


def test_ideal_table_certifies_indefinite_order(alice, ideal):
    report = causal.certify(ideal, alice)
    assert report.verdict == causal.VERDICT_INDEFINITE
    assert report.certificate_valid
    d = report.to_dict()
    json.dumps(d)
    assert d["verdict"] == causal.VERDICT_INDEFINITE


def test_robustness_grows_under_noise_mixing(ideal, alice, ideal_solved):
    eta0 = ideal_solved[1].eta_star
    etas = [causal.solve_primal(causal.build_primal(ProbabilityTable.mix(ideal, uniform_table(), lam),
                                                    alice)).eta_star for lam in (0.97, 0.94)]
    assert eta0 < etas[0] < etas[1]
    # analytic: mixing with weight lam divides the robustness by lam
    assert etas[0] == pytest.approx(eta0 / 0.97, abs=1e-6)


def test_primal_models_reproduce_the_mixture(ideal_solved, ideal, alice):
    _, result, _, _ = ideal_solved
    # at eta < 1 the models describe eta p + (1 - eta) p_N
    assert result.models is None
    target = ProbabilityTable.mix(ideal, uniform_table(), result.eta_star)
    models = causal._models_from_blocks(result.solution.primal_blocks)
    model = causal.model_probabilities(models, alice)
    assert np.max(np.abs(model.values - target.values)) <= 1e-7
    assert causal.causal_model_violations(models) == []


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2 ** 32 - 1))
def test_S_is_linear_in_the_table(ideal_solved, lam, seed):
    alpha = ideal_solved[2]
    rng = np.random.default_rng(seed)
    raw = rng.random(switch.TABLE_SHAPE)
    q = ProbabilityTable(raw / raw.sum(axis=(3, 4, 5), keepdims=True))
    p = switch.ideal_table()
    lhs = causal.evaluate_S(alpha, ProbabilityTable.mix(p, q, lam))
    rhs = lam * causal.evaluate_S(alpha, p) + (1 - lam) * causal.evaluate_S(alpha, q)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def _cell_not_at_uniform(alpha, rng):
    while True:
        idx = tuple(int(rng.integers(n)) for n in switch.TABLE_SHAPE)
        if abs(alpha.p_ref.values[idx] - 1 / 16) > 1e-3:
            return idx


def test_negative_perturbation_breaks_positivity(ideal_solved, alice):
    _, _, alpha, cert = ideal_solved
    idx = _cell_not_at_uniform(alpha, np.random.default_rng(1))
    bad = alpha.alpha.copy()
    bad[idx] -= 5.0
    check = causal.verify_certificate(
        causal.DualCertificate(causal.InequalityCoefficients(bad, p_ref=alpha.p_ref), cert.h, cert.K, cert.G,
                               cert.R, cert.J), alice)
    assert not check.ok
    assert any(v.startswith("PSD") for v in check.violations)


def test_positive_perturbation_breaks_normalization(ideal_solved, alice):
    _, _, alpha, cert = ideal_solved
    idx = _cell_not_at_uniform(alpha, np.random.default_rng(2))
    bad = alpha.alpha.copy()
    bad[idx] += 5.0
    check = causal.verify_certificate(
        causal.DualCertificate(causal.InequalityCoefficients(bad, p_ref=alpha.p_ref), cert.h, cert.K, cert.G,
                               cert.R, cert.J), alice)
    assert not check.ok
    assert any(v.startswith("normalization") for v in check.violations)


def test_perturbing_an_auxiliary_operator_is_detected(ideal_solved, alice):
    _, _, alpha, cert = ideal_solved
    K = cert.K.copy()
    K[0, 1, 0, 1] += np.eye(4)  # sum_z K no longer vanishes
    bad = causal.DualCertificate(alpha, cert.h, K, cert.G, cert.R, cert.J)
    assert not causal.verify_certificate(bad, alice).ok


def test_zero_inequality_is_trivially_valid(alice):
    assert causal.verify_certificate(causal.DualCertificate.from_alpha(causal.InequalityCoefficients.zeros()),
                                     alice).ok


def test_bare_alpha_certificate_is_reconstructed(ideal_solved, alice):
    alpha = ideal_solved[2]
    bare = causal.DualCertificate.from_alpha(alpha)
    assert not bare.complete
    assert causal.verify_certificate(bare, alice).ok
    value, _, _ = causal.minimum_over_causal_models(alpha, alice)
    # the inequality is tight: its causal minimum is 0
    assert value == pytest.approx(0.0, abs=1e-6)


def test_inequality_json_roundtrip(ideal_solved, tmp_path):
    alpha = ideal_solved[2]
    alpha.to_json(tmp_path / "a.json", note="x")
    back = causal.InequalityCoefficients.from_json(tmp_path / "a.json")
    assert np.array_equal(back.alpha, alpha.alpha)
    assert back.p_ref.digest() == alpha.p_ref.digest()
    data = json.loads((tmp_path / "a.json").read_text())
    data["metadata"]["p_ref_hash"] = "0" * 64
    (tmp_path / "b.json").write_text(json.dumps(data))
    with pytest.raises(ValueError, match="hash"):
        causal.InequalityCoefficients.from_json(tmp_path / "b.json")
    del data["coefficients"][5]
    with pytest.raises(ValueError, match="missing"):
        causal.InequalityCoefficients.from_json(json.dumps(data))


def test_assemblage_checks_catch_broken_models():
    abc, bac = causal.uniform_model()
    assert causal.causal_model_violations((abc, bac)) == []
    ops = abc.operators.copy()
    ops[0, 0, 0, 0] -= 0.5 * np.eye(4)
    broken = causal.Assemblage(abc.order, ops)
    msgs = causal.causal_model_violations((broken, bac))
    assert any("not PSD" in m for m in msgs)
    ops = bac.operators.copy()
    ops[0, 0, 1, 1] += 0.01 * np.diag([1, -1, 0, 0])
    assert causal.Assemblage(bac.order, ops).violations()
    with pytest.raises(ValueError):
        causal.Assemblage("C<A<B", abc.operators)


def test_input_validation(alice):
    bad = switch.ideal_table().values.copy()
    bad[0, 0, 0, 0, 0, 0] += 0.1
    with pytest.raises(ValueError):
        causal.build_primal(ProbabilityTable(bad), alice)
    with pytest.raises(ValueError):
        causal.build_primal(switch.ideal_table(),
                            switch.InstrumentSet("Alice", dict(list(alice.elements.items())[:3])))
    with pytest.raises(ValueError, match="shape"):
        causal.evaluate_S(np.zeros((2, 2)), switch.ideal_table())
    with pytest.raises(ValueError):
        causal.InequalityCoefficients(np.full(switch.TABLE_SHAPE, np.nan))
