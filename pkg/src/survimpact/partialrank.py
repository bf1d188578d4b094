"""Smoothed partial-rank estimation of regression coefficients.

The partial-rank objective counts, over ordered pairs in which subject j
has an observed event strictly before y_i, how often the fitted risk
score of the earlier failure exceeds that of the later survivor.  It
depends on the coefficients only through the ranks of the risk scores,
so it stays consistent across every monotone transformation model at the
price of a scale normalisation: one coefficient with a known positive
sign is anchored at +1.  The indicator is smoothed with a normal CDF of
bandwidth g to make the surface amenable to direct search, and the
smoothed surface is maximised by Nelder-Mead from several starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from ._errors import IdentifiabilityError, NumericalError, ValidationError
from .survfit import cox_fit

_MIN_N = 20
_MIN_DISTINCT_ANCHOR = 10
_MIN_ANCHOR_Z = 0.1
_NM_OPTIONS = {"xatol": 1e-4, "fatol": 1e-8, "maxfev": 2000}


@dataclass(frozen=True)
class PartialRankFit:
    """Anchored coefficients maximising the smoothed partial-rank
    objective, with the raw (unsmoothed) objective at the optimum."""

    beta: np.ndarray
    gamma: np.ndarray
    anchor: int
    g: float
    objective: float
    objective_raw: float
    converged: bool
    n_starts: int
    n_evaluations: int

    @property
    def coef(self):
        return np.concatenate([self.beta, self.gamma])

    def x_index(self, ds):
        return ds.x @ self.beta

    def risk_index(self, ds):
        risk = ds.x @ self.beta
        if self.gamma.size:
            risk = risk + ds.z @ self.gamma
        return risk


def _pair_design(ds):
    """Stack the covariate differences W_j - W_i over ordered pairs with
    delta_j = 1 and y_i > y_j (strict)."""
    W = np.hstack([ds.x, ds.z]) if ds.q else ds.x.copy()
    qualifies = (ds.delta[None, :] == 1) & (ds.y[:, None] > ds.y[None, :])
    idx_i, idx_j = np.nonzero(qualifies)
    return W[idx_j] - W[idx_i], idx_i.size


def pr_objective(ds, beta, gamma, g=None):
    """Partial-rank objective at the given coefficients.

    Returns the smoothed value when ``g`` is a positive bandwidth and the
    raw strict-indicator value when ``g`` is None.  Both are normalised
    by n(n-1), so the objective is invariant under common positive
    rescaling of the coefficients only in its raw form.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float)) if np.size(gamma) \
        else np.empty(0)
    if beta.size != ds.p or gamma.size != ds.q:
        raise ValidationError("coefficient lengths do not match the dataset")
    dmat, _ = _pair_design(ds)
    coef = np.concatenate([beta, gamma])
    diffs = dmat @ coef
    denom = ds.n * (ds.n - 1)
    if g is None:
        return float((diffs > 0).sum()) / denom
    if not g > 0:
        raise ValidationError("smoothing bandwidth g must be positive")
    return float(ndtr(diffs / g).sum()) / denom


def _smoothing_bandwidth(ds, risk):
    sd = float(np.sqrt(2.0) * np.std(risk, ddof=1))
    if sd == 0.0:
        raise NumericalError("constant initial risk score: smoothing "
                             "bandwidth undefined")
    return sd * float(ds.n) ** (-1.0 / 3.0)


def pr_fit(ds, anchor=0, g=None, init=None, n_restarts=3, rng=None):
    """Maximise the smoothed partial-rank objective with an anchored
    coefficient.

    The coefficient of conventional covariate ``anchor`` is fixed at +1
    (its sign must be known positive) and the remaining p+q-1
    coefficients are free.  Starting points are the rescaled Cox
    estimate, its absolute-anchor variant when the Cox anchor is
    negative, an optional ``init`` (e.g. the point estimate when
    refitting a bootstrap resample), and ``n_restarts`` perturbations of
    the best candidate; the best Nelder-Mead terminus across starts is
    kept, falling back to the best raw start if the search never
    improves on it.  ``g`` defaults to the pairwise-difference rate
    sqrt(2) sd(risk) n^(-1/3) evaluated at the anchored starting scale.
    """
    if ds.n < _MIN_N:
        raise IdentifiabilityError(
            "partial-rank estimation needs at least %d subjects, got %d"
            % (_MIN_N, ds.n))
    anchor = int(anchor)
    if not 0 <= anchor < ds.p:
        raise ValidationError("anchor index %d outside the conventional block"
                              % anchor)
    if np.unique(ds.x[:, anchor]).size <= _MIN_DISTINCT_ANCHOR:
        raise IdentifiabilityError(
            "anchor covariate must take more than %d distinct values"
            % _MIN_DISTINCT_ANCHOR)
    rng = np.random.default_rng(0) if rng is None else rng

    cox = cox_fit(ds, use_z=ds.q > 0)
    b_full = np.concatenate([cox.beta, cox.gamma])
    se_full = cox.se
    b_anchor = float(b_full[anchor])
    if abs(b_anchor) / float(se_full[anchor]) < _MIN_ANCHOR_Z:
        raise IdentifiabilityError(
            "anchor coefficient indistinguishable from zero: cannot fix "
            "its scale at +1")

    starts = [b_full / b_anchor]
    if b_anchor < 0:
        flipped = b_full / abs(b_anchor)
        flipped[anchor] = 1.0
        starts.append(flipped)
    if init is not None:
        init = np.asarray(init, dtype=float).reshape(-1)
        if init.size != ds.p + ds.q:
            raise ValidationError("init must supply one coefficient per covariate")
        if init[anchor] != 1.0:
            raise ValidationError("init must already be anchored at +1")
        starts.insert(0, init.copy())

    dmat, _ = _pair_design(ds)
    denom = ds.n * (ds.n - 1)
    free = np.ones(ds.p + ds.q, dtype=bool)
    free[anchor] = False

    if g is None:
        risk0 = np.hstack([ds.x, ds.z]) @ starts[0] if ds.q else ds.x @ starts[0]
        g = _smoothing_bandwidth(ds, risk0)
    g = float(g)
    if not g > 0:
        raise ValidationError("smoothing bandwidth g must be positive")

    def negative_objective(theta_free):
        coef = np.empty(ds.p + ds.q)
        coef[anchor] = 1.0
        coef[free] = theta_free
        return -ndtr(dmat @ coef / g).sum() / denom

    scale = max(1.0, float(np.max(np.abs(starts[0]))))
    base = starts[0][free]
    perturbed = [base + rng.normal(0.0, 0.25 * scale, size=base.size)
                 for _ in range(int(n_restarts))]

    best_coef = None
    best_value = np.inf
    converged = False
    n_evals = 0
    free_starts = [s[free] for s in starts] + perturbed
    if not free.any():
        coef = np.ones(1)
        value = negative_objective(np.empty(0))
        return PartialRankFit(coef[:ds.p].copy(), coef[ds.p:].copy(), anchor,
                              g, -value, pr_objective(ds, coef[:ds.p],
                                                      coef[ds.p:], None),
                              True, 1, 1)
    for x0 in free_starts:
        f0 = negative_objective(x0)
        n_evals += 1
        if f0 < best_value:
            best_value = f0
            best_coef = np.asarray(x0, dtype=float).copy()
        res = minimize(negative_objective, x0, method="Nelder-Mead",
                       options=dict(_NM_OPTIONS))
        n_evals += res.nfev
        if res.fun < best_value:
            best_value = res.fun
            best_coef = res.x.copy()
        converged = converged or bool(res.success)
    if best_coef is None or not np.all(np.isfinite(best_coef)):
        raise NumericalError("partial-rank search failed to produce a "
                             "finite optimum")

    coef = np.empty(ds.p + ds.q)
    coef[anchor] = 1.0
    coef[free] = best_coef
    beta = coef[:ds.p].copy()
    gamma = coef[ds.p:].copy()
    return PartialRankFit(beta, gamma, anchor, g, -best_value,
                          pr_objective(ds, beta, gamma, None), converged,
                          len(free_starts), n_evals)
