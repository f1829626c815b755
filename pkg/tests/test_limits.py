import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shotlim.distributions import Bernoulli, Exponential, Gamma, Mixture, jump_moment
from shotlim.levyou import BetaProc, GammaProc, IGProc, PoissonProc
from shotlim.limits import (InadmissibleParameterError, InfeasibleCalibration, FamilySequence,
                            appendixA_mapping, check_conditions, classify, limit_levy_density,
                            limiting_moments, table1_family, theorem3_calibration, theorem3_expansions,
                            theorem3_mixture, verify_density_convergence)

GRID = [1e3, 1e4, 1e6, 1e8]
T3 = dict(mu=1.0, sigma2=3.0, c1=0.5, c2=0.2, c3=1.0)
ROWS = {
    "bernoulli": (FamilySequence("bernoulli", 1.0), "levy_ou(PP)"),
    "poisson": (FamilySequence("poisson", 1.0), "levy_ou(PP)"),
    "gamma": (FamilySequence("gamma", 1.0, 3.0), "levy_ou(GP)"),
    "chisq": (FamilySequence("chisq", 1.0), "levy_ou(GP)"),
    "ig": (FamilySequence("ig", 1.0, 3.0), "levy_ou(IGP)"),
    "beta": (FamilySequence("beta", 1.0, beta=2.0), "levy_ou(BP)"),
}


def test_table1_examples():
    b = table1_family(FamilySequence("bernoulli", 1.0), 1000.0)
    assert isinstance(b, Bernoulli) and b.p == pytest.approx(1e-3)
    g = table1_family(FamilySequence("gamma", 1.0, 3.0), 1e6)
    assert isinstance(g, Gamma) and g.shape == pytest.approx(1e-6 / 3) and g.rate == pytest.approx(1 / 3)
    e = table1_family(FamilySequence("exponential", 1.0), 250.0)
    assert isinstance(e, Exponential) and e.theta == pytest.approx(1 / 250)
    ig = table1_family(FamilySequence("ig", 2.0, 3.0), 1e4)
    assert ig.mean == pytest.approx(2e-4) and ig.shape == pytest.approx(8.0 / (1e8 * 3.0))
    be = table1_family(FamilySequence("beta", 1.0, beta=2.0), 1e4)
    assert be.shape_a == pytest.approx(2e-4) and be.shape_b == pytest.approx(2.0)
    with pytest.raises(InadmissibleParameterError):
        table1_family(FamilySequence("bernoulli", 5.0), 2.0)


def test_limiting_moments_examples():
    assert tuple(limiting_moments(FamilySequence("gamma", 1.0, 3.0))) == pytest.approx((1, 3, 162))
    assert tuple(limiting_moments(FamilySequence("ig", 1.0, 3.0))) == pytest.approx((1, 3, 405))
    assert tuple(limiting_moments(FamilySequence("beta", 1.0, beta=2.0))) == pytest.approx((1, 1 / 3, 0.1))
    assert limiting_moments(FamilySequence("exponential", 1.0)).sigma2_lim == 0.0
    assert limiting_moments(FamilySequence("degenerate", 1.0)).incompatible


@pytest.mark.parametrize("row", list(ROWS))
def test_table1_rows_classify_and_converge(row):
    seq, expected = ROWS[row]
    rep = check_conditions(seq, GRID)
    assert rep.classification == expected
    assert all(rep.monotone) and rep.all_converged
    assert max(rep.final_rel_errors) < 1e-4


def test_counterexamples():
    rep = check_conditions(FamilySequence("exponential", 1.0), GRID)
    assert rep.classification == "deterministic"
    assert rep.m2_values[-1] < rep.m2_values[0] and rep.m2_values[-1] < 1e-7
    for scaling, s2 in (("mean", None), ("variance", 3.0)):
        rep = check_conditions(FamilySequence("degenerate", 1.0, s2, degenerate_scaling=scaling), GRID)
        assert rep.classification in ("mean_explodes", "deterministic") and rep.incompatible


def test_theorem3_sequence():
    seq = FamilySequence("theorem3", 1.0, 3.0, c1=0.5, c2=0.2, c3=1.0)
    rep = check_conditions(seq, [1e3, 1e4, 1e5, 1e6])
    assert rep.classification == "gaussian_diffusion"
    assert np.all(np.diff(rep.m4_values) < 0)
    e1 = theorem3_expansions(**T3, lambda_n=1e6)[0]
    assert e1 == pytest.approx(1 - 10 ** -1.8, rel=1e-14) and 1 - e1 == pytest.approx(0.015849, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(c1=st.floats(0.05, 0.66), r=st.floats(0.05, 0.95), c3=st.floats(0.1, 3.0),
       lam=st.floats(1e3, 1e9))
def test_theorem3_atom_is_negative(c1, r, c3, lam):
    mix = theorem3_mixture(1.0, 3.0, c1, r * c1 / 2, c3, lam)
    assert mix.neg_value < 0


def test_theorem3_weights():
    mix = theorem3_mixture(**T3, lambda_n=1e6)
    assert isinstance(mix, Mixture)
    assert mix.neg_prob == pytest.approx(1e-3, rel=1e-14)
    rates = [lam * theorem3_mixture(**T3, lambda_n=lam).neg_prob for lam in (1e3, 1e4, 1e5, 1e6)]
    assert np.all(np.diff(rates) > 0) and rates[-1] == pytest.approx(1e3)


@pytest.mark.parametrize("calibration", ["gamma", "ig", "beta"])
@pytest.mark.parametrize("lam", [1e3, 1e4, 1e5, 1e6, 1e7, 1e8])
def test_theorem3_first_two_moments_match_expansions(calibration, lam):
    mix = theorem3_mixture(**T3, lambda_n=lam, calibration=calibration)
    e1, e2, _ = theorem3_expansions(**T3, lambda_n=lam)
    assert lam * jump_moment(mix, 1) == pytest.approx(e1, rel=1e-12)
    assert lam * jump_moment(mix, 2) == pytest.approx(e2, rel=1e-12)


def test_theorem3_second_moment_example():
    lam = 1e6
    closed = 3 - 3 * lam ** -0.5 + lam ** -0.5 * (-lam**0.2 + 1) ** 2
    assert lam * jump_moment(theorem3_mixture(**T3, lambda_n=lam), 2) == pytest.approx(closed, rel=1e-12)


@pytest.mark.parametrize("calibration", ["gamma", "ig", "beta"])
def test_theorem3_fourth_target_is_below_the_moment_floor(calibration):
    # E[J^4] >= E[J^2]^3 / E[J]^2 for any nonnegative J; the prescribed target sits under it
    for lam in (1e3, 1e5, 1e8):
        cal = theorem3_calibration(**T3, lambda_n=lam, calibration=calibration)
        assert cal.targets[2] < cal.fourth_moment_floor
        assert cal.achieved[2] >= cal.fourth_moment_floor * (1 - 1e-12)
        assert cal.violated == ("E[J+^4]",) and not cal.feasible
        with pytest.raises(InfeasibleCalibration) as err:
            theorem3_mixture(**T3, lambda_n=lam, calibration=calibration, strict_fourth=True)
        assert err.value.violated == "E[J+^4]"


def test_theorem3_fourth_target_reachable_when_floor_allows():
    # the floor decays like lambda^{-1-2 c2}, so c3 < 2 c2 puts the target above it
    cal = theorem3_calibration(1.0, 3.0, 0.5, 0.2, 0.1, 1e8)
    assert cal.targets[2] > cal.fourth_moment_floor


def test_theorem3_validation():
    for bad in (dict(c1=0.7, c2=0.1, c3=1), dict(c1=0.5, c2=0.3, c3=1), dict(c1=0.5, c2=0.2, c3=0)):
        with pytest.raises(InadmissibleParameterError):
            FamilySequence("theorem3", 1.0, 3.0, **bad)


def test_appendixA():
    assert appendixA_mapping("bernoulli", {"p": 0.01}, 100.0) == pytest.approx((1.0, 1.0))
    a, b = 0.2, 0.5
    assert appendixA_mapping("gamma", {"shape": a, "rate": b}, 10.0) == pytest.approx(
        (10 * a / b, 10 * a * (1 + a) / b**2))
    seq = FamilySequence("gamma", 1.0, 3.0)
    mu, s2 = appendixA_mapping(table1_family(seq, 1e8), lambda_n=1e8)
    assert mu == pytest.approx(1.0, rel=1e-12) and s2 == pytest.approx(3.0, rel=1e-6)
    ig = table1_family(FamilySequence("ig", 2.0, 5.0), 1e4)
    assert appendixA_mapping(ig, lambda_n=1e4) == pytest.approx((2.0, 5.0))


def test_limit_levy_density():
    assert limit_levy_density(FamilySequence("bernoulli", 2.0)) == PoissonProc(2.0)
    ch = limit_levy_density(FamilySequence("chisq", 1.5))
    assert isinstance(ch, GammaProc) and ch.increment_msq == pytest.approx(3.0)
    ig = limit_levy_density(FamilySequence("ig", 1.0, 3.0))
    assert isinstance(ig, IGProc) and ig.s == pytest.approx(math.sqrt(1 / 3)) and ig.b == pytest.approx(ig.s)
    assert limit_levy_density(FamilySequence("beta", 1.0, beta=2.0)) == BetaProc(1.0, 2.0)
    with pytest.raises(ValueError):
        limit_levy_density(FamilySequence("exponential", 1.0))


@pytest.mark.parametrize("row", list(ROWS))
def test_limit_density_moments_match_limits(row):
    seq, _ = ROWS[row]
    spec, lim = limit_levy_density(seq), limiting_moments(seq)
    assert spec.increment_mean == pytest.approx(lim.mu_lim, rel=1e-12)
    assert spec.increment_msq == pytest.approx(lim.sigma2_lim, rel=1e-12)


def test_bernoulli_atom_is_exact():
    err = verify_density_convergence(ROWS["bernoulli"][0], [1.0], [1e3, 1e5, 1e7])
    assert np.all(err < 1e-12)


@pytest.mark.parametrize("row", ["gamma", "chisq", "ig", "beta", "poisson"])
def test_density_convergence_decreases(row):
    seq, _ = ROWS[row]
    xs = np.geomspace(0.01, 0.9, 12) if row == "beta" else np.geomspace(0.1, 5.0, 12)
    err = verify_density_convergence(seq, xs, [1e3, 1e5, 1e7])
    assert np.all(np.diff(err) < 0)


def test_density_far_tail_skipped():
    seq = FamilySequence("gamma", 1.0, 1.0)
    err = verify_density_convergence(seq, [50.0], [1e3, 1e5])
    assert np.all(err == 0.0)
    assert float(limit_levy_density(seq).density(50.0)) < 1e-20


NONNEG = [FamilySequence("bernoulli", 1.0), FamilySequence("poisson", 2.0), FamilySequence("gamma", 1.0, 3.0),
          FamilySequence("chisq", 3.0), FamilySequence("ig", 1.0, 0.5), FamilySequence("beta", 1.0, beta=0.3),
          FamilySequence.beta_tied(1.0, 3.0), FamilySequence("exponential", 1.0),
          FamilySequence("degenerate", 1.0), FamilySequence("degenerate", 1.0, 2.0, degenerate_scaling="variance")]


@pytest.mark.parametrize("seq", NONNEG, ids=lambda s: s.family_kind)
def test_no_gaussian_limit_from_nonnegative_family(seq):
    lim = limiting_moments(seq)
    if lim.sigma2_lim and lim.sigma2_lim > 0 and math.isfinite(lim.mu_lim):
        assert lim.m4_lim > 0
    assert check_conditions(seq, GRID).classification != "gaussian_diffusion"


def test_classify_rule():
    from shotlim.limits import LimitingMoments
    assert classify(LimitingMoments(1.0, 2.0, 0.0)) == "gaussian_diffusion"
    assert classify(LimitingMoments(math.inf, 2.0, 0.0)) == "mean_explodes"
    assert classify(LimitingMoments(None, 2.0, 0.0)) == "unknown"
    assert classify(LimitingMoments(1.0, 2.0, 3.0), "ig") == "levy_ou(IGP)"


def test_report_serialization():
    rep = check_conditions(FamilySequence("degenerate", 1.0, 2.0, degenerate_scaling="variance"), GRID)
    d = json.loads(rep.to_json())
    assert d["closed_form_limits"][0] == "inf" and d["classification"] == rep.classification
    assert len(d["m1_values"]) == 4
    table = check_conditions(ROWS["gamma"][0], GRID).to_table()
    assert "levy_ou(GP)" in table and "162" in table


def test_report_input_checks():
    with pytest.raises(ValueError):
        check_conditions(ROWS["gamma"][0], [1e3, 1e4, 1e5])
    with pytest.raises(ValueError):
        check_conditions(ROWS["gamma"][0], [1e3, 1e5, 1e4, 1e6])


def test_beta_preset():
    seq = FamilySequence.beta_tied(2.0, 4.0)
    assert seq.beta == 0.5
    assert FamilySequence("beta", 2.0, 4.0).beta == 0.5
