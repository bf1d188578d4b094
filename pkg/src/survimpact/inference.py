"""Impact estimation: enhanced versus projected concordance with
bootstrap inference.

Three routes produce the pair (enhanced, projected) and their difference
xi, the incremental ordering ability attributable to the new-covariate
block:

- ``pl-cpe``   partial-likelihood coefficients, model-based concordance
               probability estimates, kernel projection of theta;
- ``pl-wci``   partial-likelihood coefficients, censoring-weighted
               c-index of the full risk score versus the conventional
               part of the same score (never refit);
- ``pr-wci``   anchored partial-rank coefficients with the same pair of
               weighted c-indices.

Bootstrap inference resamples subjects with replacement and refits the
chosen route from scratch, bandwidths included; replicate streams are
indexed by replicate number so results do not depend on the number of
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from . import _rng
from ._errors import NumericalError, ValidationError
from .concordance import (cpe, cpe_projected, default_bandwidths,
                          weighted_c_index)
from .dataset import METHODS, canonical_family, canonical_method
from .partialrank import pr_fit
from .survfit import km_fit
from .transmodel import fit_transform_model

_MAX_FAILURE_SHARE = 0.10
_Z_NORMAL = 1.96


@dataclass(frozen=True)
class ImpactEstimate:
    """Enhanced and projected concordance with xi = enhanced - projected."""

    method: str
    tau: float
    enhanced: float
    projected: float
    xi: float
    family: str | None = None
    h: float | None = None
    g: float | None = None
    enhanced_se: float | None = None
    projected_se: float | None = None
    xi_se: float | None = None
    enhanced_ci: tuple[float, float] | None = None
    projected_ci: tuple[float, float] | None = None
    xi_ci: tuple[float, float] | None = None
    bootstrap_reps: int = 0
    bootstrap_failures: int = 0
    baseline_misspecified: bool = False

    def to_dict(self):
        d = {"method": self.method, "tau": float(self.tau),
             "enhanced": float(self.enhanced),
             "projected": float(self.projected), "xi": float(self.xi),
             "bootstrap_reps": int(self.bootstrap_reps)}
        if self.family is not None:
            d["family"] = self.family
        if self.h is not None:
            d["h"] = float(self.h)
        if self.g is not None:
            d["g"] = float(self.g)
        if self.bootstrap_reps:
            d.update(enhanced_se=float(self.enhanced_se),
                     projected_se=float(self.projected_se),
                     xi_se=float(self.xi_se),
                     enhanced_ci=[float(v) for v in self.enhanced_ci],
                     projected_ci=[float(v) for v in self.projected_ci],
                     xi_ci=[float(v) for v in self.xi_ci],
                     bootstrap_failures=int(self.bootstrap_failures))
        if self.baseline_misspecified:
            d["baseline_misspecified"] = True
        return d


def point_estimates(ds, methods, family="ph", anchor=0, h=None, g=None,
                    opt_rng=None, pr_init=None, pr_restarts=3, naive=False):
    """(enhanced, projected) pairs for the requested routes on one dataset.

    One proportional-hazards partial-likelihood fit serves both PL
    routes; one partial-rank search serves the PR route.  Returns
    ``(values, aux)`` where ``values[method] = (enhanced, projected)``
    and ``aux`` carries the fitted objects and realised bandwidths for
    warm starts and reporting.
    """
    if ds.tau is None:
        raise ValidationError("an analysis horizon tau is required")
    for m in methods:
        if m not in METHODS:
            raise ValidationError(
                "unknown method %r (choose from %s)" % (m, METHODS))
    values = {}
    aux = {"h": None, "g": None, "cox": None, "pr": None, "estimates": {}}
    need_pl = "pl-cpe" in methods or "pl-wci" in methods or naive
    G = None
    if need_pl:
        tfit, cox, G = fit_transform_model(ds, family=family, tau=ds.tau,
                                           use_z=ds.q > 0)
        aux["cox"] = cox
        if "pl-cpe" in methods:
            h_use = default_bandwidths(ds, tfit).h if h is None else float(h)
            aux["h"] = h_use
            enhanced = cpe(ds, tfit)
            projected = cpe_projected(ds, tfit, h_use)
            aux["estimates"]["pl-cpe"] = (enhanced, projected)
            values["pl-cpe"] = (enhanced.value, projected.value)
            if naive:
                reduced, _, _ = fit_transform_model(ds, family=family,
                                                    tau=ds.tau, use_z=False)
                reduced_est = cpe(ds, reduced)
                aux["estimates"]["pl-cpe-naive"] = (enhanced, reduced_est)
                values["pl-cpe-naive"] = (enhanced.value, reduced_est.value)
        if "pl-wci" in methods:
            risk = ds.x @ cox.beta
            if ds.q:
                risk = risk + ds.z @ cox.gamma
            enhanced = weighted_c_index(ds, risk, G, ds.tau)
            projected = weighted_c_index(ds, ds.x @ cox.beta, G, ds.tau,
                                         estimator="wCI-projected")
            aux["estimates"]["pl-wci"] = (enhanced, projected)
            values["pl-wci"] = (enhanced.value, projected.value)
    if "pr-wci" in methods:
        if G is None:
            G = km_fit(ds.y, 1 - ds.delta)
        prf = pr_fit(ds, anchor=anchor, g=g, init=pr_init,
                     n_restarts=pr_restarts, rng=opt_rng)
        aux["pr"] = prf
        aux["g"] = prf.g
        enhanced = weighted_c_index(ds, prf.risk_index(ds), G, ds.tau)
        projected = weighted_c_index(ds, prf.x_index(ds), G, ds.tau,
                                     estimator="wCI-projected")
        aux["estimates"]["pr-wci"] = (enhanced, projected)
        values["pr-wci"] = (enhanced.value, projected.value)
    return values, aux


_BOOT_CONTEXT = None


def _bootstrap_worker(r):
    ds, methods, family, anchor, h, g, seed, iteration, pr_init, naive = \
        _BOOT_CONTEXT
    rng = _rng.stream(seed, _rng.BOOTSTRAP, iteration, r)
    idx = rng.integers(0, ds.n, size=ds.n)
    opt_rng = _rng.stream(seed, _rng.OPTIMIZER, iteration, r + 1)
    try:
        smp = ds.take(idx)
        values, _ = point_estimates(smp, methods, family=family,
                                    anchor=anchor, h=h, g=g,
                                    opt_rng=opt_rng, pr_init=pr_init,
                                    pr_restarts=1, naive=naive)
        return r, values, None
    except (NumericalError, ValidationError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        return r, None, "%s: %s" % (type(exc).__name__, exc)


def run_bootstrap(ds, methods, reps, seed, family="ph", anchor=0, h=None,
                  g=None, iteration=0, pr_init=None, threads=1, naive=False):
    """Replicate (enhanced, projected) pairs over ``reps`` resamples.

    Returns ``(replicates, failures)`` where ``replicates`` is a list of
    per-replicate value dicts in replicate order (failed replicates
    dropped) and ``failures`` the number dropped.  Raises when more than
    10% of the replicates fail.
    """
    global _BOOT_CONTEXT
    _BOOT_CONTEXT = (ds, tuple(methods), family, anchor, h, g, int(seed),
                     int(iteration), pr_init, naive)
    try:
        if threads and int(threads) > 1:
            with get_context("fork").Pool(int(threads)) as pool:
                results = pool.map(_bootstrap_worker, range(int(reps)))
        else:
            results = [_bootstrap_worker(r) for r in range(int(reps))]
    finally:
        _BOOT_CONTEXT = None
    results.sort(key=lambda t: t[0])
    replicates = [values for _, values, _ in results if values is not None]
    failures = int(reps) - len(replicates)
    if failures > _MAX_FAILURE_SHARE * int(reps):
        first = next(msg for _, values, msg in results if values is None)
        raise NumericalError(
            "bootstrap aborted: %d of %d replicates failed (first failure: %s)"
            % (failures, reps, first))
    return replicates, failures


def _interval(est, se):
    return (est - _Z_NORMAL * se, est + _Z_NORMAL * se)


def _summarise(method, tau, enhanced, projected, replicates, failures, reps,
               family=None, h=None, g=None, baseline_misspecified=False):
    xi = enhanced - projected
    if not reps:
        return ImpactEstimate(method, tau, enhanced, projected, xi,
                              family=family, h=h, g=g,
                              baseline_misspecified=baseline_misspecified)
    pairs = np.array([rep[method] for rep in replicates], dtype=float)
    if pairs.shape[0] < 2:
        raise NumericalError("fewer than two successful bootstrap replicates")
    enh_b, proj_b = pairs[:, 0], pairs[:, 1]
    xi_b = enh_b - proj_b
    se = [float(np.std(v, ddof=1)) for v in (enh_b, proj_b, xi_b)]
    return ImpactEstimate(
        method, tau, enhanced, projected, xi, family=family, h=h, g=g,
        enhanced_se=se[0], projected_se=se[1], xi_se=se[2],
        enhanced_ci=_interval(enhanced, se[0]),
        projected_ci=_interval(projected, se[1]),
        xi_ci=_interval(xi, se[2]),
        bootstrap_reps=int(reps), bootstrap_failures=int(failures),
        baseline_misspecified=baseline_misspecified)


def impact(ds, method="pl-cpe", family="ph", bootstrap_reps=0, seed=0,
           anchor=0, h=None, g=None, threads=1, detail=False):
    """Estimate the concordance impact of the new-covariate block.

    Fits the chosen route on ``ds`` (whose ``tau`` sets the horizon) and,
    when ``bootstrap_reps > 0``, attaches resampling standard errors and
    normal-theory 95% intervals for the enhanced value, the projected
    value and their difference xi.  With ``detail=True`` returns
    ``(estimate, aux)`` where ``aux`` carries the fitted objects behind
    the point estimate.
    """
    method = canonical_method(method)
    family = canonical_family(family)
    opt_rng = _rng.stream(seed, _rng.OPTIMIZER, 0, 0)
    values, aux = point_estimates(ds, (method,), family=family, anchor=anchor,
                                  h=h, g=g, opt_rng=opt_rng)
    enhanced, projected = values[method]
    replicates, failures = [], 0
    if bootstrap_reps:
        pr_init = aux["pr"].coef if aux["pr"] is not None else None
        replicates, failures = run_bootstrap(
            ds, (method,), bootstrap_reps, seed, family=family, anchor=anchor,
            h=h, g=g, pr_init=pr_init, threads=threads)
    est = _summarise(method, float(ds.tau), enhanced, projected, replicates,
                     failures, int(bootstrap_reps),
                     family=family if method == "pl-cpe" else None,
                     h=aux["h"], g=aux["g"])
    return (est, aux) if detail else est


def naive_nested_impact(ds, family="ph", bootstrap_reps=0, seed=0, h=None,
                        threads=1, detail=False):
    """Nested-model contrast that refits the reduced model on the
    conventional covariates alone.

    Unlike the projection, the reduced fit carries its own baseline and
    its own marginal precedence probability, so when the new covariates
    matter the reduced working model is misspecified and the contrast is
    not a clean measure of their incremental ordering ability; the
    estimate is flagged accordingly.  With no new covariates the reduced
    and full fits coincide and the contrast is exactly zero.
    """
    family = canonical_family(family)
    values, aux = point_estimates(ds, ("pl-cpe",), family=family, h=h,
                                  naive=True)
    enhanced, projected = values["pl-cpe-naive"]
    replicates, failures = [], 0
    if bootstrap_reps:
        replicates, failures = run_bootstrap(
            ds, ("pl-cpe",), bootstrap_reps, seed, family=family, h=h,
            threads=threads, naive=True)
    est = _summarise("pl-cpe-naive", float(ds.tau), enhanced, projected,
                     replicates, failures, int(bootstrap_reps),
                     family=family, h=aux["h"],
                     baseline_misspecified=ds.q > 0)
    return (est, aux) if detail else est
