"""Nonparametric survival curves, Cox partial-likelihood fitting, and the
scaled-Schoenfeld-residual test of proportional hazards.

The Kaplan-Meier fitter serves double duty: called with the event
indicator it estimates the event survival curve, called with the
complement it estimates the censoring distribution G used by inverse
probability of censoring weights.  All weights evaluate G at the left
limit G(y-) so the weight at the largest censored time stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from ._errors import ConvergenceError, NumericalError, ValidationError

_GRAD_TOL = 1e-8
_MAX_ITER = 50
_MAX_HALVINGS = 20


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous nonincreasing step function on [0, inf).

    ``values[k]`` is the survival probability just after ``jump_times[k]``;
    before the first jump the function equals 1.
    """

    jump_times: np.ndarray
    values: np.ndarray
    n_at_risk: np.ndarray

    def __post_init__(self):
        jt = np.ascontiguousarray(self.jump_times, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=float)
        nar = np.ascontiguousarray(self.n_at_risk, dtype=np.int64)
        if np.any(np.diff(jt) <= 0):
            raise ValidationError("jump times must be strictly increasing")
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12) or np.any(np.diff(vals) > 1e-12):
            raise ValidationError("survival values must be nonincreasing in [0, 1]")
        for arr in (jt, vals, nar):
            arr.setflags(write=False)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "n_at_risk", nar)

    def eval(self, t):
        """Right-continuous evaluation S(t)."""
        t = np.asarray(t, dtype=float)
        ext = np.concatenate(([1.0], self.values))
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = ext[idx]
        return float(out) if out.ndim == 0 else out

    def eval_left(self, t):
        """Left limit S(t-)."""
        t = np.asarray(t, dtype=float)
        ext = np.concatenate(([1.0], self.values))
        idx = np.searchsorted(self.jump_times, t, side="left")
        out = ext[idx]
        return float(out) if out.ndim == 0 else out


def km_fit(times, indicator):
    """Kaplan-Meier product-limit estimate.

    ``indicator[i] = 1`` marks time ``i`` as an event for the curve being
    estimated.  To estimate the censoring distribution G, pass
    ``1 - delta`` as the indicator.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(indicator)
    if t.size == 0:
        raise ValidationError("km_fit needs at least one observation")
    if t.shape != e.shape:
        raise ValidationError("times and indicator must have equal length")
    if np.any(t <= 0):
        raise ValidationError("times must be strictly positive")
    order = np.argsort(t, kind="stable")
    ts, es = t[order], e[order].astype(bool)
    uniq, first = np.unique(ts, return_index=True)
    # events and at-risk count per distinct time
    d = np.add.reduceat(es.astype(np.int64), first)
    at_risk = ts.size - first
    has_event = d > 0
    jt = uniq[has_event]
    dk = d[has_event]
    rk = at_risk[has_event]
    surv = np.cumprod(1.0 - dk / rk)
    return StepSurvival(jt, surv, rk)


def eval_left(s, t):
    """Left-continuous limit S(t-) of a step survival function."""
    return s.eval_left(t)


@dataclass(frozen=True)
class CoxFit:
    """Cox partial-likelihood fit (Breslow tie convention).

    ``schoenfeld`` holds the per-event scaled Schoenfeld residual matrix
    (one row per event, ordered by event time); ``schoenfeld_raw`` holds
    the unscaled residuals and ``event_info`` the per-event risk-set
    covariance matrices, both used by the proportionality test.
    """

    beta: np.ndarray
    gamma: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    loglik: float
    schoenfeld: np.ndarray
    schoenfeld_raw: np.ndarray
    event_info: np.ndarray
    event_times: np.ndarray
    converged: bool
    iterations: int
    n_events: int
    names: tuple
    event_km: StepSurvival

    @property
    def coef(self):
        """Concatenated (beta, gamma) coefficient vector."""
        return np.concatenate([self.beta, self.gamma])


def _partial_loglik_parts(W, y, delta, beta, want_info=True):
    """Breslow partial log-likelihood, gradient and information.

    ``W`` must already be sorted by ascending time together with ``y``
    and ``delta``.
    """
    n, k = W.shape
    eta = W @ beta
    eta = eta - eta.max()  # common shift cancels in all terms
    r = np.exp(eta)
    rw = r[:, None] * W
    # suffix sums over the risk set {j : y_j >= y_i}
    s0 = np.cumsum(r[::-1])[::-1]
    s1 = np.cumsum(rw[::-1], axis=0)[::-1]
    # index of the first observation in each tie group
    start = np.searchsorted(y, y, side="left")
    ev = delta == 1
    xbar = s1[start[ev]] / s0[start[ev]][:, None]
    loglik = float(np.sum(eta[ev]) - np.sum(np.log(s0[start[ev]])))
    grad = W[ev].sum(axis=0) - xbar.sum(axis=0)
    if not want_info:
        return loglik, grad, None
    s2 = np.cumsum(rw[::-1, :, None] * W[::-1, None, :], axis=0)[::-1]
    v = s2[start[ev]] / s0[start[ev]][:, None, None] - xbar[:, :, None] * xbar[:, None, :]
    info = v.sum(axis=0)
    return loglik, grad, info


def cox_fit(ds, use_z=True):
    """Fit the Cox proportional hazards model by damped Newton iteration.

    With ``use_z`` the design is ``(x, z)`` jointly; otherwise ``x``
    alone (the reduced model).  Ties are handled by the Breslow
    convention.  Standard errors come from the inverse information at
    the optimum.
    """
    if use_z and ds.q > 0:
        W = np.hstack([ds.x, ds.z])
        names = ds.x_names + ds.z_names
    else:
        W = ds.x.copy()
        names = ds.x_names
    n, k = W.shape
    spread = W.max(axis=0) - W.min(axis=0)
    if np.any(spread == 0):
        raise ValidationError(
            "constant covariate column %r cannot be fit" % (names[int(np.argmin(spread))],))
    center = W.mean(axis=0)
    Wc = W - center
    order = np.argsort(ds.y, kind="stable")
    Ws, ys, deltas = Wc[order], ds.y[order], ds.delta[order]

    beta = np.zeros(k)
    loglik, grad, info = _partial_loglik_parts(Ws, ys, deltas, beta)
    converged = False
    iterations = 0
    for iterations in range(1, _MAX_ITER + 1):
        if np.max(np.abs(grad)) < _GRAD_TOL:
            converged = True
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "singular information matrix; covariates are collinear") from None
        scale = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            cand = beta + scale * step
            cand_ll, cand_grad, cand_info = _partial_loglik_parts(Ws, ys, deltas, cand)
            if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-12:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("step halving failed to increase the partial likelihood")
        beta, loglik, grad, info = cand, cand_ll, cand_grad, cand_info
    else:
        if np.max(np.abs(grad)) < _GRAD_TOL:
            converged = True
    if not converged:
        raise ConvergenceError(
            "Cox fit did not converge in %d iterations (max |gradient| %.3g)"
            % (_MAX_ITER, float(np.max(np.abs(grad)))))
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise ConvergenceError("singular information matrix at the optimum") from None
    se = np.sqrt(np.diag(cov))

    # Schoenfeld residuals at the event times (Breslow: tied events share
    # the same risk-set average)
    eta = Ws @ beta
    eta = eta - eta.max()
    r = np.exp(eta)
    rw = r[:, None] * Ws
    s0 = np.cumsum(r[::-1])[::-1]
    s1 = np.cumsum(rw[::-1], axis=0)[::-1]
    s2 = np.cumsum(rw[::-1, :, None] * Ws[::-1, None, :], axis=0)[::-1]
    start = np.searchsorted(ys, ys, side="left")
    ev = deltas == 1
    xbar = s1[start[ev]] / s0[start[ev]][:, None]
    raw = Ws[ev] - xbar
    event_info = (s2[start[ev]] / s0[start[ev]][:, None, None]
                  - xbar[:, :, None] * xbar[:, None, :])
    d = int(ev.sum())
    scaled = beta + d * (raw @ cov)
    event_times = ys[ev]

    p = ds.p
    return CoxFit(
        beta=beta[:p].copy(),
        gamma=beta[p:].copy(),
        se=se,
        cov=cov,
        loglik=loglik,
        schoenfeld=scaled,
        schoenfeld_raw=raw,
        event_info=event_info,
        event_times=event_times,
        converged=converged,
        iterations=iterations,
        n_events=d,
        names=tuple(names),
        event_km=km_fit(ds.y, ds.delta),
    )


@dataclass(frozen=True)
class PhTestResult:
    """Score test of zero slope of scaled Schoenfeld residuals on a
    transformed time axis, per covariate and globally."""

    names: tuple
    statistics: np.ndarray
    p_values: np.ndarray
    global_statistic: float
    global_p_value: float
    df: int
    transform: str

    def to_dict(self):
        return {
            "transform": self.transform,
            "per_covariate": [
                {"name": n, "chisq": float(s), "p": float(p)}
                for n, s, p in zip(self.names, self.statistics, self.p_values)
            ],
            "global": {"chisq": float(self.global_statistic),
                       "p": float(self.global_p_value), "df": self.df},
        }


def ph_test(fit, transform="identity"):
    """Proportional hazards diagnostic from Schoenfeld residuals.

    Score test for coefficients drifting along a transformed time axis:
    each effect is extended with a time-varying term on ``g(t)`` and the
    added slopes are score-tested at zero.  The slope information uses
    the exact per-event risk-set covariances, with the baseline
    coefficients profiled out, rather than the cruder average-covariance
    shortcut.  A small p-value indicates time-varying effects.
    ``transform`` is ``identity`` (raw event times) or ``km`` (one minus
    the Kaplan-Meier curve of the observed times, left-continuous).
    """
    if fit.n_events < 2:
        raise ValidationError("proportionality test needs at least 2 events")
    if transform == "identity":
        g = fit.event_times.astype(float)
    elif transform == "km":
        g = 1.0 - fit.event_km.eval_left(fit.event_times)
    else:
        raise ValidationError("unknown time transform %r (identity or km)" % (transform,))
    w = g - g.mean()
    if float(np.sum(w * w)) <= 0:
        raise ValidationError("degenerate time transform: all transformed times equal")
    raw = fit.schoenfeld_raw
    vk = fit.event_info
    u = w @ raw
    v11 = vk.sum(axis=0)
    v12 = np.tensordot(w, vk, axes=1)
    v22 = np.tensordot(w * w, vk, axes=1)
    try:
        efficient = v22 - v12 @ np.linalg.solve(v11, v12)
        gstat = float(u @ np.linalg.solve(efficient, u))
    except np.linalg.LinAlgError:
        raise NumericalError("singular information in the proportionality test") from None
    diag = np.diag(efficient)
    if np.any(diag <= 0):
        raise NumericalError("non-positive slope information in the proportionality test")
    stats = u**2 / diag
    pvals = chi2.sf(stats, 1)
    k = raw.shape[1]
    gp = float(chi2.sf(gstat, k))
    return PhTestResult(fit.names, stats, pvals, gstat, gp, k, transform)
