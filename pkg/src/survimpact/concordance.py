"""Concordance estimators and the kernel projection of the pairwise
precedence probabilities.

Four estimators live here: the censoring-weighted c-index, the
model-based concordance probability estimate (CPE), and their projected
counterparts that measure how much ordering the conventional covariates
alone retain.  The projection of theta is a Nadaraya-Watson average over
the conventional risk index; the O(n^4) double pair sum is accelerated
through a panelwise Chebyshev tensor surrogate whose error is validated
against the exact kernel at build time, keeping the fast path within
1e-8 of the naive sum for every pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.chebyshev import chebvander

from ._errors import NumericalError, ValidationError

_SURROGATE_TOL = 1e-9
_PANEL_WIDTH = 1.5
_DEGREES = (16, 24, 32)
_ATOM_SLICE = 1 << 19


@dataclass(frozen=True)
class ConcordanceEstimate:
    """A concordance value with its estimator tag and bookkeeping."""

    value: float
    estimator: str
    tau: float
    pi_hat: float | None = None
    n_pairs_used: int = 0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise NumericalError("concordance estimate %r outside [0, 1]" % (self.value,))
        if self.pi_hat is not None and not 0.0 < self.pi_hat < 1.0:
            raise NumericalError("marginal precedence estimate %r outside (0, 1)"
                                 % (self.pi_hat,))

    def to_dict(self):
        d = {"value": float(self.value), "estimator": self.estimator,
             "tau": float(self.tau), "n_pairs_used": int(self.n_pairs_used)}
        if self.pi_hat is not None:
            d["pi_hat"] = float(self.pi_hat)
        return d


@dataclass(frozen=True)
class Bandwidths:
    """Projection kernel bandwidth h and indicator-smoothing bandwidth g."""

    h: float
    g: float

    def __post_init__(self):
        if not (self.h > 0 and self.g > 0):
            raise ValidationError("bandwidths must be positive")


def default_bandwidths(ds, fit):
    """Scaled n^(-1/3) bandwidths.

    h = sd(beta'x) * n^(-1/3) for the projection kernel and
    g = sd(pairwise risk differences) * n^(-1/3) for indicator
    smoothing; the pairwise-difference standard deviation over ordered
    pairs equals sqrt(2) times the sample standard deviation of the risk
    scores.  Both rates satisfy h, g -> 0, nh^2 -> inf, nh^4 -> 0 and
    ng^4 -> 0.
    """
    beta = np.atleast_1d(np.asarray(fit.beta, dtype=float))
    gamma = np.asarray(getattr(fit, "gamma", ()), dtype=float).reshape(-1)
    u = ds.x @ beta
    risk = u + (ds.z @ gamma if gamma.size and ds.q else 0.0)
    rate = float(ds.n) ** (-1.0 / 3.0)
    sd_u = float(np.std(u, ddof=1))
    sd_diff = float(np.sqrt(2.0) * np.std(risk, ddof=1))
    if sd_u == 0.0 or sd_diff == 0.0:
        raise NumericalError("zero risk-score standard deviation: bandwidths undefined")
    return Bandwidths(h=sd_u * rate, g=sd_diff * rate)


def _concordance_matrix(scores):
    """Pairwise ordering indicator I(s_i > s_j) with exact ties
    contributing 1/2."""
    s = np.asarray(scores, dtype=float)
    gt = (s[:, None] > s[None, :]).astype(float)
    eq = (s[:, None] == s[None, :]).astype(float)
    return gt + 0.5 * eq


def weighted_c_index(ds, risk, G, tau, estimator="wCI"):
    """Censoring-weighted c-index over ordered comparable pairs.

    A pair (i, j) is comparable when subject i has an observed event
    before both y_j and tau; each comparable pair carries the inverse
    probability of censoring weight G(y_i-)^-2.  Exact risk-score ties
    contribute 1/2 to the numerator.
    """
    risk = np.asarray(risk, dtype=float)
    tau = float(tau)
    qual = (ds.delta == 1) & (ds.y < tau)
    g_left = np.asarray(G.eval_left(ds.y), dtype=float)
    if np.any(qual & (g_left <= 0.0)):
        raise NumericalError("zero censoring-survival weight at an event before tau")
    w = np.zeros(ds.n)
    w[qual] = g_left[qual] ** -2.0
    pair = qual[:, None] & (ds.y[:, None] < ds.y[None, :])
    weights = pair * w[:, None]
    den = float(weights.sum())
    if den <= 0.0:
        raise NumericalError("no comparable pairs before tau")
    conc = _concordance_matrix(risk)
    num = float((weights * conc).sum())
    return ConcordanceEstimate(min(max(num / den, 0.0), 1.0), estimator, tau,
                               None, int(pair.sum()))


def wci_projected(ds, risk_x, G, tau):
    """Weighted c-index of the conventional-covariate score alone, with
    weights and comparable pairs identical to the enhanced version."""
    est = weighted_c_index(ds, risk_x, G, tau, estimator="wCI-projected")
    return est


def marginal_pi(ds, fit, ipcw=False, G=None):
    """Marginal precedence probability Pr(T1 < T2, T1 < tau).

    The default is model-based: the mean of the fitted pairwise theta
    over all ordered pairs, which is consistent by iterated expectation
    and keeps the CPE free of censoring weights.  With ``ipcw=True`` the
    inverse-probability-weighted share of comparable pairs is returned
    instead (a diagnostic cross-check; requires ``G``).
    """
    n = ds.n
    if not ipcw:
        theta = fit.theta_matrix(ds)
        off = ~np.eye(n, dtype=bool)
        return float(theta[off].sum() / (n * (n - 1)))
    if G is None:
        raise ValidationError("the IPCW variant of marginal_pi needs G")
    tau = float(fit.tau)
    qual = (ds.delta == 1) & (ds.y < tau)
    g_left = np.asarray(G.eval_left(ds.y), dtype=float)
    if np.any(qual & (g_left <= 0.0)):
        raise NumericalError("zero censoring-survival weight at an event before tau")
    w = np.zeros(n)
    w[qual] = g_left[qual] ** -2.0
    pair = qual[:, None] & (ds.y[:, None] < ds.y[None, :])
    return float((pair * w[:, None]).sum() / (n * (n - 1)))


def cpe(ds, fit):
    """Model-based concordance probability estimate.

    Sums I(risk_i > risk_j) * theta_ij over ordered pairs (ties weighted
    1/2) and divides by n(n-1) times the model-based marginal precedence
    probability.
    """
    n = ds.n
    theta = fit.theta_matrix(ds)
    off = ~np.eye(n, dtype=bool)
    pi_hat = float(theta[off].sum() / (n * (n - 1)))
    if pi_hat <= 0.0:
        raise NumericalError("marginal precedence probability is zero at tau=%g" % fit.tau)
    conc = _concordance_matrix(fit.linear_predictor(ds))
    num = float((conc * theta)[off].sum())
    value = num / (n * (n - 1) * pi_hat)
    return ConcordanceEstimate(min(max(value, 0.0), 1.0), "CPE", float(fit.tau),
                               pi_hat, n * (n - 1))


@dataclass(frozen=True)
class ProjectedTheta:
    """Pairwise projected precedence probabilities theta^[P].

    ``matrix[i, j]`` is the kernel average of theta over the new-covariate
    mixing indices (k, l), weighted by the closeness of beta'x_k to
    beta'x_i and beta'x_l to beta'x_j.
    """

    matrix: np.ndarray
    h: float
    method: str

    def pair(self, i, j):
        return float(self.matrix[i, j])


def _chebyshev_nodes(deg):
    k = np.arange(deg + 1)
    return np.cos(np.pi * (2.0 * k + 1.0) / (2.0 * (deg + 1)))


def _build_surrogate(theta_core, lo, hi, n_panels, deg):
    """Panelwise Chebyshev tensor surrogate of theta_core on [lo, hi]^2.

    Returns (edges, centers, halfw, Cbig, max_err) where Cbig is the
    block coefficient matrix over panel-pair boxes and max_err the
    largest deviation from the exact kernel on a 2x oversampled
    validation grid.
    """
    d1 = deg + 1
    edges = np.linspace(lo, hi, n_panels + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    halfw = 0.5 * (edges[1:] - edges[:-1])
    Cbig = np.zeros((n_panels * d1, n_panels * d1))
    tnode = _chebyshev_nodes(deg)
    a = np.arange(d1)
    M = np.cos(np.outer(a, np.pi * (2.0 * np.arange(d1) + 1.0) / (2.0 * d1)))
    tfine = _chebyshev_nodes(2 * d1 - 1)
    Vfine = chebvander(tfine, deg)
    max_err = 0.0
    for p in range(n_panels):
        xs = centers[p] + halfw[p] * tnode
        xf = centers[p] + halfw[p] * tfine
        for q in range(n_panels):
            ys = centers[q] + halfw[q] * tnode
            vals = theta_core(xs[:, None], ys[None, :])
            C = (2.0 / d1) ** 2 * (M @ vals @ M.T)
            C[0, :] *= 0.5
            C[:, 0] *= 0.5
            Cbig[p * d1:(p + 1) * d1, q * d1:(q + 1) * d1] = C
            yf = centers[q] + halfw[q] * tfine
            exact = theta_core(xf[:, None], yf[None, :])
            approx = Vfine @ C @ Vfine.T
            err = float(np.max(np.abs(exact - approx)))
            if err > max_err:
                max_err = err
    return edges, centers, halfw, Cbig, max_err


def project_theta(ds, fit, h, method="fast"):
    """Nadaraya-Watson projection of the pairwise precedence matrix onto
    the conventional risk index.

    For each ordered pair (i, j),
        theta^[P]_ij = sum_kl theta_ijkl phi_h(u_i - u_k) phi_h(u_j - u_l)
                       / sum_kl phi_h(u_i - u_k) phi_h(u_j - u_l)
    with u = beta'x and a normal kernel phi_h.  ``method='naive'``
    evaluates the quadruple sum directly; ``method='fast'`` factors the
    product kernel through a validated Chebyshev tensor surrogate of
    theta, reducing the cost to O(n^2 r).  Because every projected value
    is a convex combination of surrogate values, a surrogate accurate to
    1e-9 keeps the fast path within 1e-8 of the naive sum.

    With q = 0 (or a constant new-covariate index) there is nothing to
    project out and the exact pairwise theta matrix is returned.
    """
    u = fit.x_index(ds)
    if float(np.ptp(u)) == 0.0:
        raise NumericalError(
            "projection undefined: all conventional risk scores are identical")
    v = fit.z_index(ds)
    n = ds.n
    if ds.q == 0 or float(np.ptp(v)) == 0.0:
        return ProjectedTheta(fit.theta_matrix(ds),
                              0.0 if h is None else float(h), "exact")
    if h is None or not h > 0:
        raise ValidationError("projection bandwidth h must be positive")
    h = float(h)
    dmat = (u[:, None] - u[None, :]) / h
    wmat = np.exp(-0.5 * dmat * dmat)
    what = wmat / wmat.sum(axis=1, keepdims=True)
    atoms = fit.m_tau + u[:, None] + v[None, :]
    theta_core = fit.family.theta_core

    if method == "naive":
        out = np.empty((n, n))
        for i in range(n):
            ci = atoms[i]
            for j in range(n):
                block = theta_core(ci[:, None], atoms[j][None, :])
                out[i, j] = what[i] @ block @ what[j]
        return ProjectedTheta(np.clip(out, 0.0, 1.0), h, "naive")
    if method != "fast":
        raise ValidationError("unknown projection method %r" % (method,))

    lo = float(atoms.min())
    hi = float(atoms.max())
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    lo, hi = lo - pad, hi + pad
    n_panels = max(1, int(np.ceil((hi - lo) / _PANEL_WIDTH)))
    for deg in _DEGREES:
        edges, centers, halfw, Cbig, err = _build_surrogate(
            theta_core, lo, hi, n_panels, deg)
        if err <= _SURROGATE_TOL:
            break
    else:
        raise NumericalError(
            "projection surrogate error %.3g above tolerance %.3g at maximum degree"
            % (err, _SURROGATE_TOL))
    d1 = deg + 1
    pan = np.clip(np.searchsorted(edges, atoms, side="right") - 1, 0, n_panels - 1)
    sloc = np.clip((atoms - centers[pan]) / halfw[pan], -1.0, 1.0)
    P = np.zeros((n, n_panels * d1))
    rows_all = np.repeat(np.arange(n), n)
    pan_flat = pan.reshape(-1)
    sloc_flat = sloc.reshape(-1)
    w_flat = what.reshape(-1)
    for p in range(n_panels):
        sel = np.nonzero(pan_flat == p)[0]
        for lo_i in range(0, sel.size, _ATOM_SLICE):
            chunk = sel[lo_i:lo_i + _ATOM_SLICE]
            T = chebvander(sloc_flat[chunk], deg) * w_flat[chunk, None]
            rows = rows_all[chunk]
            for c in range(d1):
                P[:, p * d1 + c] += np.bincount(rows, weights=T[:, c], minlength=n)
    proj = P @ Cbig @ P.T
    return ProjectedTheta(np.clip(proj, 0.0, 1.0), h, "fast")


def cpe_projected(ds, fit, h=None, method="fast"):
    """Concordance probability estimate of the conventional index alone.

    Orders pairs by beta'x and weights them with the projected theta
    matrix; the denominator reuses the enhanced model-based marginal
    precedence probability so that enhanced and projected estimates are
    directly comparable.
    """
    if h is None:
        h = default_bandwidths(ds, fit).h
    n = ds.n
    theta_p = project_theta(ds, fit, h, method=method)
    off = ~np.eye(n, dtype=bool)
    theta = fit.theta_matrix(ds)
    pi_hat = float(theta[off].sum() / (n * (n - 1)))
    if pi_hat <= 0.0:
        raise NumericalError("marginal precedence probability is zero at tau=%g" % fit.tau)
    conc = _concordance_matrix(fit.x_index(ds))
    num = float((conc * theta_p.matrix)[off].sum())
    value = num / (n * (n - 1) * pi_hat)
    return ConcordanceEstimate(min(max(value, 0.0), 1.0), "CPE-projected",
                               float(fit.tau), pi_hat, n * (n - 1))
