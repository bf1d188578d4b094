import numpy as np
import pytest

from survimpact import (
    NumericalError,
    SurvivalDataset,
    ValidationError,
    cpe,
    cpe_projected,
    fit_transform_model,
    impact,
    km_fit,
    naive_nested_impact,
    weighted_c_index,
)
from survimpact.concordance import wci_projected
from survimpact.inference import point_estimates, run_bootstrap

from oracles import random_dataset


# ----------------------------------------------- point estimates --------


def test_point_estimates_agree_with_direct_composition(ph_ds):
    values, aux = point_estimates(ph_ds, ("pl-cpe", "pl-wci"))
    fit, cox, G = fit_transform_model(ph_ds, family="ph", tau=ph_ds.tau)
    enh_cpe = cpe(ph_ds, fit)
    proj_cpe = cpe_projected(ph_ds, fit, h=aux["h"])
    assert values["pl-cpe"] == (enh_cpe.value, proj_cpe.value)
    enh_wci = weighted_c_index(ph_ds, fit.linear_predictor(ph_ds), G,
                               ph_ds.tau)
    proj_wci = wci_projected(ph_ds, fit.x_index(ph_ds), G, ph_ds.tau)
    assert values["pl-wci"] == (enh_wci.value, proj_wci.value)
    assert set(aux["estimates"]) == {"pl-cpe", "pl-wci"}


def test_point_estimates_unknown_method_rejected(ph_ds):
    with pytest.raises(ValidationError):
        point_estimates(ph_ds, ("pl-cpe", "mystery"))


def test_point_estimates_projected_never_above_half_gap(ph_ds):
    values, aux = point_estimates(ph_ds, ("pl-cpe", "pl-wci", "pr-wci"))
    for method, (enh, proj) in values.items():
        assert 0.0 <= proj <= 1.0
        assert 0.0 <= enh <= 1.0


# --------------------------------------------------------- impact -------


def test_impact_reports_difference(ph_ds):
    est = impact(ph_ds, method="pl-cpe")
    assert est.xi == pytest.approx(est.enhanced - est.projected, abs=1e-15)
    assert est.method == "pl-cpe"
    assert est.family == "ph"
    assert est.tau == ph_ds.tau
    assert est.bootstrap_reps == 0
    d = est.to_dict()
    assert "enhanced_ci" not in d and "xi_se" not in d
    assert d["xi"] == est.xi


def test_impact_bootstrap_summaries(ph_ds):
    est = impact(ph_ds, method="pl-cpe", bootstrap_reps=16, seed=3)
    assert est.bootstrap_reps == 16
    assert est.bootstrap_failures == 0
    for se in (est.enhanced_se, est.projected_se, est.xi_se):
        assert se is not None and se > 0
    lo, hi = est.xi_ci
    assert lo <= est.xi <= hi
    assert hi - est.xi == pytest.approx(1.96 * est.xi_se, abs=1e-12)
    d = est.to_dict()
    assert d["xi_ci"] == [lo, hi]


def test_impact_deterministic_and_thread_invariant(ph_ds):
    a = impact(ph_ds, method="pl-wci", bootstrap_reps=12, seed=9, threads=1)
    b = impact(ph_ds, method="pl-wci", bootstrap_reps=12, seed=9, threads=3)
    c = impact(ph_ds, method="pl-wci", bootstrap_reps=12, seed=9, threads=1)
    assert a.to_dict() == b.to_dict() == c.to_dict()


def test_impact_seed_changes_bootstrap_only(ph_ds):
    a = impact(ph_ds, method="pl-cpe", bootstrap_reps=12, seed=1)
    b = impact(ph_ds, method="pl-cpe", bootstrap_reps=12, seed=2)
    assert a.enhanced == b.enhanced and a.projected == b.projected
    assert a.xi_se != b.xi_se


def test_impact_pr_route_runs(ph_ds_uncensored):
    est = impact(ph_ds_uncensored, method="pr-wci", seed=5)
    assert 0.0 <= est.projected <= est.enhanced <= 1.0 or est.xi < 0.05
    assert est.g is not None


def test_impact_user_fixed_bandwidths_survive(ph_ds):
    est = impact(ph_ds, method="pl-cpe", h=0.21)
    assert est.h == 0.21


def test_run_bootstrap_failure_abort():
    # one subject far beyond the horizon carries the tau annotation;
    # resamples that miss it fail validation, and ~36% of draws miss a
    # given row, far above the 10% failure allowance
    rng = np.random.default_rng(11)
    n = 30
    x = rng.normal(size=(n, 2))
    z = rng.normal(size=(n, 1))
    t = np.concatenate([rng.uniform(0.2, 2.0, size=n - 1), [50.0]])
    ds = SurvivalDataset(y=t, delta=np.ones(n, dtype=int), x=x, z=z, tau=10.0)
    with pytest.raises(NumericalError):
        run_bootstrap(ds, ("pl-cpe",), reps=40, seed=0)


def test_run_bootstrap_replicate_alignment(ph_ds):
    reps, failures = run_bootstrap(ph_ds, ("pl-cpe", "pl-wci"), reps=6, seed=4)
    assert failures == 0
    assert len(reps) == 6
    for rep in reps:
        assert set(rep) == {"pl-cpe", "pl-wci"}
        for enh, proj in rep.values():
            assert 0.0 <= proj <= 1.0 and 0.0 <= enh <= 1.0
    again, _ = run_bootstrap(ph_ds, ("pl-cpe", "pl-wci"), reps=6, seed=4,
                             threads=2)
    assert reps == again


# ------------------------------------------------- nested baseline ------


def test_naive_nested_impact_flags_misspecification(ph_ds):
    est = naive_nested_impact(ph_ds)
    assert est.method == "pl-cpe-naive"
    assert est.baseline_misspecified is True
    assert est.xi == pytest.approx(est.enhanced - est.projected, abs=1e-15)


def test_naive_nested_impact_exact_when_no_new_covariates(ph_ds):
    bare = SurvivalDataset(y=ph_ds.y, delta=ph_ds.delta, x=ph_ds.x,
                           z=np.zeros((ph_ds.n, 0)), tau=ph_ds.tau)
    est = naive_nested_impact(bare)
    assert est.xi == 0.0
    assert est.baseline_misspecified is False


def test_impact_q_zero_bit_exact_identity(ph_ds):
    bare = SurvivalDataset(y=ph_ds.y, delta=ph_ds.delta, x=ph_ds.x,
                           z=np.zeros((ph_ds.n, 0)), tau=ph_ds.tau)
    for method in ("pl-cpe", "pl-wci"):
        est = impact(bare, method=method)
        assert est.enhanced == est.projected
        assert est.xi == 0.0
