import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit
from scipy.stats import norm

from survimpact import (
    NumericalError,
    fit_transform_model,
    get_family,
    km_fit,
    scenario,
    generate,
    solve_m_tau,
    theta_ph,
    theta_po,
    theta_probit,
)
from survimpact._rng import DATA, stream
from survimpact.transmodel import theta_cross

from oracles import INDEX, SURVIVOR, theta_quadrature

THETA = {"ph": theta_ph, "po": theta_po, "probit": theta_probit}


def _theta_public(family, c1, c2):
    """Call the public theta function at horizon indices (c1, c2)."""
    lin12 = c1 - c2
    s1 = SURVIVOR[family](c1)
    if family == "ph":
        return theta_ph(lin12, s1, SURVIVOR[family](c2))
    if family == "po":
        return theta_po(lin12, s1)
    return theta_probit(lin12, s1)


# ------------------------------------------------- link families --------


@pytest.mark.parametrize("family", ["ph", "po", "probit"])
def test_g_inverse_is_inverse_of_g(family):
    fam = get_family(family)
    s = np.concatenate([[1e-6, 1 - 1e-6], np.linspace(0.001, 0.999, 41)])
    np.testing.assert_allclose(fam.g_inverse(fam.g(s)), s, rtol=0, atol=1e-12)
    # monotone decreasing on (0, 1)
    g = fam.g(np.linspace(0.01, 0.99, 50))
    assert np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)
    assert fam.g(0.1) > fam.g(0.9)


# ------------------------------------------------------ theta -----------


def test_theta_ph_symmetric_pair_closed_form():
    for s in (0.2, 0.5, 0.8):
        assert theta_ph(0.0, s, s) == pytest.approx((1 - s * s) / 2, abs=1e-12)


def test_theta_ph_named_point_vs_quadrature():
    c1, c2 = INDEX["ph"](0.6), INDEX["ph"](0.7)
    val = theta_ph(c1 - c2, 0.6, 0.7)
    assert val == pytest.approx(theta_quadrature("ph", c1, c2), abs=1e-6)


def test_theta_ph_quadrature_at_spec_lin12():
    # same (S1, S2) = (0.6, 0.7) marginals, linear contrast forced to 0.5
    # by shifting the second index
    c1 = INDEX["ph"](0.6)
    c2 = c1 - 0.5
    val = theta_ph(0.5, 0.6, SURVIVOR["ph"](c2))
    assert val == pytest.approx(theta_quadrature("ph", c1, c2), abs=1e-6)


def test_theta_po_series_limit_vs_quadrature():
    for s in (0.3, 0.5, 0.85):
        c = INDEX["po"](s)
        assert theta_po(0.0, s) == pytest.approx(
            theta_quadrature("po", c, c), abs=1e-6)


def test_theta_po_series_continuity():
    a = theta_po(1e-5, 0.5)
    b = theta_po(1e-3, 0.5)
    assert abs(a - b) < 1e-3
    # dense sweep across the series/direct switch at 1e-4
    lam = np.linspace(-3e-4, 3e-4, 61)
    vals = np.array([theta_po(v, 0.5) for v in lam])
    assert np.all(np.abs(np.diff(vals)) < 1e-5)
    assert np.all(np.diff(vals) > 0)  # increasing in the contrast


def test_theta_po_named_point_vs_quadrature():
    c1 = INDEX["po"](0.4)
    c2 = c1 - 0.8
    val = theta_po(0.8, 0.4, SURVIVOR["po"](c2))
    assert val == pytest.approx(theta_quadrature("po", c1, c2), abs=1e-6)


def test_theta_probit_orthant_closed_form():
    # lin12 = 0, S1 = 0.5 is the equicorrelated orthant probability with
    # rho = 1/sqrt(2)
    want = 0.25 + np.arcsin(1 / np.sqrt(2)) / (2 * np.pi)
    assert theta_probit(0.0, 0.5) == pytest.approx(want, abs=1e-10)


def test_theta_probit_named_point_vs_quadrature():
    c1 = INDEX["probit"](0.7)
    c2 = c1 - 0.3
    assert theta_probit(0.3, 0.7) == pytest.approx(
        theta_quadrature("probit", c1, c2), abs=1e-7)


def test_theta_probit_marginal_limit():
    # S1 -> 0 sends the horizon constraint to infinity, leaving the
    # precedence margin alone
    for lin12 in (-1.0, 0.0, 0.4, 2.0):
        assert theta_probit(lin12, 1e-12) == pytest.approx(
            norm.cdf(lin12 / np.sqrt(2)), abs=1e-6)


def test_theta_ph_horizon_free_limit():
    # S -> 0 recovers the classic proportional-hazards concordance
    for lin12 in (-1.5, -0.3, 0.0, 0.8, 2.0):
        s1 = 1e-9
        s2 = s1 ** np.exp(-lin12)
        assert theta_ph(lin12, s1, s2) == pytest.approx(
            expit(lin12), abs=1e-6)


@pytest.mark.parametrize("family", ["ph", "po", "probit"])
def test_theta_exchange_symmetry(family):
    # theta(1,2) + theta(2,1) = Pr(min < tau) = 1 - S1 S2
    grid_c1 = INDEX[family](np.array([0.1, 0.3, 0.5, 0.7, 0.9]))
    for c1 in grid_c1:
        for lin12 in (-1.2, -0.4, 0.0, 0.6, 1.5):
            c2 = c1 - lin12
            s1, s2 = SURVIVOR[family](c1), SURVIVOR[family](c2)
            total = _theta_public(family, c1, c2) + _theta_public(family, c2, c1)
            assert total == pytest.approx(1 - s1 * s2, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    family=st.sampled_from(["ph", "po", "probit"]),
    c1=st.floats(-3, 3),
    d1=st.floats(-2, 2),
    d2=st.floats(0.01, 1.5),
)
def test_theta_monotone_increasing_in_contrast(family, c1, d1, d2):
    lo = _theta_public(family, c1, c1 - d1)
    hi = _theta_public(family, c1, c1 - (d1 + d2))
    assert 0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0
    assert hi >= lo - 1e-12


def test_theta_vanishes_without_events():
    s = 1 - 1e-9
    assert theta_ph(0.3, s, s) < 1e-6
    assert theta_po(0.3, s) < 1e-6
    assert theta_probit(0.3, s) < 1e-6


# ------------------------------------------------- m(tau) solver --------


def test_m_tau_intercept_only_inversion():
    # no covariates, no censoring, empirical survival at tau equal to 1/2
    rng = np.random.default_rng(0)
    y = np.sort(rng.exponential(1.0, size=200))
    tau = float(np.mean(y[99:101]))  # splits the sample in half
    from survimpact import SurvivalDataset

    ds = SurvivalDataset(y=y, delta=np.ones(200, dtype=int),
                         x=np.zeros((200, 1)), z=np.zeros((200, 0)))
    G = km_fit(ds.y, 1 - ds.delta)
    m = solve_m_tau(ds, np.zeros(1), np.zeros(0), "ph", G, tau)
    assert m == pytest.approx(np.log(-np.log(0.5)), abs=1e-9)


def test_m_tau_recovers_analytic_transform_on_simulated_data():
    scn = scenario("ph", xi=0.025, censoring=0.0, n=2000, seed=3)
    ds = generate(scn, stream(scn.seed, DATA, 0))
    fit, cox, G = fit_transform_model(ds, family="ph", tau=scn.tau)
    # under the generator the true transform is m(t) = log t
    s_baseline = np.exp(-np.exp(fit.m_tau))
    assert abs(s_baseline - np.exp(-scn.tau)) < 0.02
    # and the covariate-conditional survival agrees with the
    # Breslow-style empirical survival at a reference subject
    km_all = km_fit(ds.y, ds.delta)

    lin = fit.linear_predictor(ds)
    s_hat = fit.survival_tau(ds)
    # average predicted survival matches the marginal KM at tau
    assert abs(float(np.mean(s_hat)) - km_all.eval(scn.tau)) < 0.02


def test_m_tau_residual_contract(ph_ds):
    fit, cox, G = fit_transform_model(ph_ds, family="po", tau=ph_ds.tau)
    fam = get_family("po")
    target = float(np.sum((ph_ds.y >= ph_ds.tau) / G.eval_left(ph_ds.tau)))
    lhs = float(np.sum(fam.g_inverse(fit.m_tau + fit.linear_predictor(ph_ds))))
    assert abs(target - lhs) < 1e-9 * ph_ds.n


def test_m_tau_errors_when_horizon_beyond_censoring_support(tiny_ds):
    G_zero = km_fit(tiny_ds.y, np.ones(tiny_ds.n, dtype=int))  # hits zero
    with pytest.raises(NumericalError):
        solve_m_tau(tiny_ds, np.zeros(2), np.zeros(1), "ph", G_zero,
                    float(tiny_ds.y.max()) + 1.0)


# ---------------------------------------------------- theta_cross -------


def test_theta_cross_diagonal_reduction(ph_ds):
    fit, _, _ = fit_transform_model(ph_ds, family="ph", tau=ph_ds.tau)
    mat = fit.theta_matrix(ph_ds)
    for i, j in [(0, 1), (3, 7), (10, 2)]:
        assert theta_cross("ph", i, j, i, j, fit, ph_ds) == pytest.approx(
            mat[i, j], abs=1e-14)


def test_theta_cross_ignores_mix_rows_when_q_zero(ph_ds):
    fit, _, _ = fit_transform_model(ph_ds, family="ph", tau=ph_ds.tau,
                                    use_z=False)
    a = theta_cross("ph", 0, 1, 2, 3, fit, ph_ds)
    b = theta_cross("ph", 0, 1, 9, 5, fit, ph_ds)
    assert a == b


def test_theta_cross_manual_assembly(ph_ds):
    fit, _, _ = fit_transform_model(ph_ds, family="po", tau=ph_ds.tau)
    i, j, k, l = 4, 9, 1, 13
    u = ph_ds.x @ fit.beta
    v = ph_ds.z @ fit.gamma
    ca = fit.m_tau + u[i] + v[k]
    cb = fit.m_tau + u[j] + v[l]
    want = theta_po(ca - cb, SURVIVOR["po"](ca))
    assert theta_cross("po", i, j, k, l, fit, ph_ds) == pytest.approx(
        want, abs=1e-12)


# ------------------------------------------------ fitted transform ------


@pytest.mark.parametrize("family", ["ph", "po", "probit"])
def test_fit_transform_model_structure(ph_ds, family):
    fit, cox, G = fit_transform_model(ph_ds, family=family, tau=ph_ds.tau)
    np.testing.assert_array_equal(fit.beta, cox.beta)
    np.testing.assert_array_equal(fit.gamma, cox.gamma)
    assert fit.tau == ph_ds.tau
    mat = fit.theta_matrix(ph_ds)
    assert mat.shape == (ph_ds.n, ph_ds.n)
    assert np.all((mat >= 0) & (mat <= 1))
    s = fit.survival_tau(ph_ds)
    off = ~np.eye(ph_ds.n, dtype=bool)
    comp = mat + mat.T
    want = 1 - s[:, None] * s[None, :]
    np.testing.assert_allclose(comp[off], want[off], atol=1e-10)


def test_fit_transform_model_use_z_false(ph_ds):
    fit, cox, G = fit_transform_model(ph_ds, family="ph", tau=ph_ds.tau,
                                      use_z=False)
    assert fit.gamma.size == 0
    assert np.all(fit.z_index(ph_ds) == 0.0)
