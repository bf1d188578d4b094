"""Scale-transformation model family: link functions, the horizon
intercept m(tau), and closed-form pairwise precedence probabilities.

The model is m(T) = -(beta'x + gamma'z) + eps with m increasing and the
error law fixed by the link family.  Writing c = m(tau) + beta'x + gamma'z
for a subject's risk index at the horizon, the survival probability at
tau is Fbar_eps(c), and the probability that subject 1 fails before
subject 2 and before tau depends on the pair only through (c1, c2):

    theta(c1, c2) = integral_{v <= c1} Fbar_eps(v - (c1 - c2)) f_eps(v) dv.

Each family below carries that kernel in closed form.  theta is
increasing in the index difference lin12 = c1 - c2: the subject with the
higher risk index is the one more likely to fail first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logit, ndtr, ndtri

from ._errors import NumericalError, ValidationError

S_CLAMP = 1e-10
_PO_SERIES_THRESHOLD = 1e-4

# fixed Gauss-Legendre rule for the bivariate normal correlation integral
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)
_RHO = 1.0 / np.sqrt(2.0)
_BVN_R = 0.5 * _RHO * (_GL_NODES + 1.0)
_BVN_W = 0.5 * _RHO * _GL_WEIGHTS
_BVN_CHUNK = 1 << 18


def clamp_survival(s):
    """Clamp survival probabilities away from {0, 1} to guard the logs
    taken at the edge of follow-up."""
    return np.clip(s, S_CLAMP, 1.0 - S_CLAMP)


def bvn_cdf(a, b):
    """Standard bivariate normal CDF at (a, b) with correlation 1/sqrt(2).

    Uses the one-dimensional reduction Phi2(a,b;rho) = Phi(a)Phi(b) +
    (2*pi)^-1 * integral_0^rho exp(-(a^2 - 2*r*a*b + b^2)/(2*(1-r^2)))
    / sqrt(1-r^2) dr on a fixed 48-point Gauss-Legendre rule; the
    integrand is smooth on [0, 1/sqrt(2)] so the rule is exact to well
    below 1e-12.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    flat_a = a.reshape(-1)
    flat_b = b.reshape(-1)
    out = np.empty(flat_a.shape[0])
    denom = 2.0 * (1.0 - _BVN_R * _BVN_R)
    for lo in range(0, flat_a.shape[0], _BVN_CHUNK):
        aa = flat_a[lo:lo + _BVN_CHUNK, None]
        bb = flat_b[lo:lo + _BVN_CHUNK, None]
        q = (aa * aa - 2.0 * _BVN_R * aa * bb + bb * bb) / denom
        integ = np.exp(-q) / np.sqrt(1.0 - _BVN_R * _BVN_R) @ _BVN_W
        out[lo:lo + _BVN_CHUNK] = integ / (2.0 * np.pi)
    out += ndtr(flat_a) * ndtr(flat_b)
    out = out.reshape(a.shape)
    return float(out) if out.ndim == 0 else out


def _theta_core_ph(c1, c2):
    # hazards with ratio exp(c1-c2); joint survival exp(-(e^c1 + e^c2))
    with np.errstate(over="ignore"):
        total = np.exp(c1) + np.exp(c2)
    return expit(c1 - c2) * -np.expm1(-total)


def _theta_core_po(c1, c2):
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    c1, c2 = np.broadcast_arrays(c1, c2)
    lam = c1 - c2
    out = np.empty(lam.shape)
    small = np.abs(lam) < _PO_SERIES_THRESHOLD
    neg = ~small & (lam < 0)
    pos = ~small & ~neg
    if np.any(small):
        l = lam[small]
        s = expit(-c1[small])
        out[small] = ((1.0 - s * s) / 2.0
                      + l * (1.0 - s) ** 2 * (1.0 + 2.0 * s) / 6.0
                      - l * l * s * s * (1.0 - s) ** 2 / 4.0)
    if np.any(pos):
        out[pos] = _theta_po_direct(c1[pos], c2[pos])
    if np.any(neg):
        # reflect through theta(c1,c2) + theta(c2,c1) = 1 - S1*S2
        s1s2 = -np.expm1(log_expit(-c1[neg]) + log_expit(-c2[neg]))
        out[neg] = s1s2 - _theta_po_direct(c2[neg], c1[neg])
    res = out.reshape(np.broadcast(c1, c2).shape)
    return float(res) if res.ndim == 0 else res


def _theta_po_direct(c1, c2):
    # valid for lam = c1 - c2 >= threshold, where rho = exp(-lam) < 1
    lam = c1 - c2
    rho = np.exp(-lam)
    s1 = expit(-c1)
    log_ratio = log_expit(-c1) - log_expit(-c2)
    return (rho * log_ratio + (1.0 - s1) * (1.0 - rho)) / (1.0 - rho) ** 2


def _theta_core_probit(c1, c2):
    return bvn_cdf(c1, (c1 - c2) / np.sqrt(2.0))


@dataclass(frozen=True)
class LinkFamily:
    """A link g mapping survival to the linear-predictor scale, its
    inverse, the error density, and the pairwise precedence kernel."""

    tag: str
    g: callable = field(repr=False)
    g_inverse: callable = field(repr=False)
    density: callable = field(repr=False)
    theta_core: callable = field(repr=False)


PH = LinkFamily(
    tag="ph",
    g=lambda s: np.log(-np.log(clamp_survival(np.asarray(s, dtype=float)))),
    g_inverse=lambda c: np.exp(-np.exp(np.asarray(c, dtype=float))),
    density=lambda c: np.exp(np.asarray(c) - np.exp(np.asarray(c, dtype=float))),
    theta_core=_theta_core_ph,
)

PO = LinkFamily(
    tag="po",
    g=lambda s: -logit(clamp_survival(np.asarray(s, dtype=float))),
    g_inverse=lambda c: expit(-np.asarray(c, dtype=float)),
    density=lambda c: expit(-np.asarray(c, dtype=float)) * expit(np.asarray(c, dtype=float)),
    theta_core=_theta_core_po,
)

PROBIT = LinkFamily(
    tag="probit",
    g=lambda s: -ndtri(clamp_survival(np.asarray(s, dtype=float))),
    g_inverse=lambda c: ndtr(-np.asarray(c, dtype=float)),
    density=lambda c: np.exp(-0.5 * np.asarray(c, dtype=float) ** 2) / np.sqrt(2 * np.pi),
    theta_core=_theta_core_probit,
)

_FAMILIES = {f.tag: f for f in (PH, PO, PROBIT)}


def get_family(tag):
    """Resolve a family tag (or pass a LinkFamily through)."""
    if isinstance(tag, LinkFamily):
        return tag
    t = str(tag).strip().lower()
    if t not in _FAMILIES:
        raise ValidationError("unknown link family %r" % (tag,))
    return _FAMILIES[t]


def theta_ph(lin12, s1, s2):
    """Precedence probability under the proportional hazards link.

    Pr(T1 < T2, T1 < tau) for a pair whose risk indices differ by
    ``lin12`` and whose survival probabilities at tau are ``s1`` and
    ``s2``: the first factor expit(lin12) is the probability that the
    higher-index subject fails first, the second 1 - s1*s2 that the
    earlier failure happens before tau.
    """
    lin12 = np.asarray(lin12, dtype=float)
    s1 = clamp_survival(np.asarray(s1, dtype=float))
    s2 = clamp_survival(np.asarray(s2, dtype=float))
    out = expit(lin12) * -np.expm1(np.log(s1) + np.log(s2))
    return float(out) if np.ndim(out) == 0 else out


def theta_po(lin12, s1, s2=None):
    """Precedence probability under the proportional odds link.

    The pair is parameterized by ``(lin12, s1)``: the model pins the
    second survival probability at expit(logit(s1) + lin12), so ``s2``
    is redundant and accepted only for signature symmetry.  The closed
    form has a removable singularity at lin12 = 0, evaluated by a
    second-order series expansion below |lin12| < 1e-4.
    """
    lin12 = np.asarray(lin12, dtype=float)
    s1 = clamp_survival(np.asarray(s1, dtype=float))
    c1 = -logit(s1)
    out = _theta_core_po(c1, c1 - lin12)
    return float(out) if np.ndim(out) == 0 else out


def theta_probit(lin12, s1):
    """Precedence probability under the generalized probit link:
    the bivariate normal CDF at (c1, lin12/sqrt(2)) with correlation
    1/sqrt(2), where c1 is the standard normal upper quantile of s1."""
    lin12 = np.asarray(lin12, dtype=float)
    s1 = clamp_survival(np.asarray(s1, dtype=float))
    c1 = -ndtri(s1)
    out = _theta_core_probit(c1, c1 - lin12)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TransformFit:
    """Fitted scale-transformation model: link family, coefficients and
    the horizon intercept m(tau)."""

    family: LinkFamily
    beta: np.ndarray
    gamma: np.ndarray
    m_tau: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "family", get_family(self.family))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float).reshape(-1))
        if not np.isfinite(self.m_tau):
            raise ValidationError("m(tau) must be finite")

    def x_index(self, ds):
        """Conventional-covariate risk index beta'x."""
        return ds.x @ self.beta

    def z_index(self, ds):
        """New-covariate index gamma'z."""
        if self.gamma.size == 0 or ds.q == 0:
            return np.zeros(ds.n)
        return ds.z @ self.gamma

    def linear_predictor(self, ds):
        """Full risk score beta'x + gamma'z."""
        return self.x_index(ds) + self.z_index(ds)

    def risk_index(self, ds):
        """Horizon risk index c = m(tau) + beta'x + gamma'z."""
        return self.m_tau + self.linear_predictor(ds)

    def survival_tau(self, ds):
        """Covariate-conditional survival at tau, clamped into (0, 1)."""
        return clamp_survival(self.family.g_inverse(self.risk_index(ds)))

    def theta_matrix(self, ds):
        """n x n matrix of pairwise precedence probabilities
        theta[i, j] = Pr(T_i < T_j, T_i < tau | indices)."""
        c = self.risk_index(ds)
        return self.family.theta_core(c[:, None], c[None, :])


def solve_m_tau(ds, beta, gamma, family, G, tau):
    """Solve the horizon-intercept estimating equation.

    Finds the root m of
        sum_i { I(y_i >= tau) / G(tau-) - g_inverse(m + beta'x_i + gamma'z_i) } = 0
    by bisection on [-40, 40] followed by Newton polishing; the final
    residual must be below 1e-9 * n.
    """
    fam = get_family(family)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    gamma = np.asarray(() if gamma is None else gamma, dtype=float).reshape(-1)
    if not np.all(np.isfinite(beta)) or not np.all(np.isfinite(gamma)):
        raise ValidationError("coefficients must be finite")
    lin = ds.x @ beta
    if gamma.size:
        lin = lin + ds.z @ gamma
    ghat = float(G.eval_left(tau))
    if ghat <= 0.0:
        raise NumericalError(
            "censoring survival G(tau-) is zero: the horizon tau=%g lies beyond "
            "the censoring support" % tau)
    target = float(np.sum(ds.y >= tau)) / ghat

    def equation(m):
        return target - float(np.sum(fam.g_inverse(m + lin)))

    lo, hi = -40.0, 40.0
    f_lo, f_hi = equation(lo), equation(hi)
    if not (f_lo <= 0.0 <= f_hi):
        raise NumericalError(
            "estimating equation for m(tau) has no sign change on [-40, 40] "
            "(f(-40)=%.3g, f(40)=%.3g)" % (f_lo, f_hi))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if equation(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    m = 0.5 * (lo + hi)
    tol = 1e-9 * ds.n
    for _ in range(40):
        f = equation(m)
        if abs(f) < tol:
            break
        slope = float(np.sum(fam.density(m + lin)))
        if slope <= 0.0:
            break
        cand = m - f / slope
        if not lo <= cand <= hi:
            cand = 0.5 * (lo + hi)
        if equation(cand) < 0.0:
            lo = cand
        else:
            hi = cand
        m = cand
    if abs(equation(m)) >= tol:
        raise NumericalError("m(tau) solver residual %.3g above tolerance %.3g"
                             % (abs(equation(m)), tol))
    return float(m)


def theta_cross(family, i, j, k, l, fit, ds):
    """Mixed-index precedence probability: the x parts come from rows
    (i, j), the z parts from rows (k, l).

    Evaluates theta at indices (m + beta'x_i + gamma'z_k,
    m + beta'x_j + gamma'z_l), recomputing the survival probabilities at
    the mixed indices; with q = 0 the result does not depend on (k, l),
    and (k, l) = (i, j) recovers the pair's own theta.
    """
    fam = get_family(family)
    u = fit.x_index(ds)
    v = fit.z_index(ds)
    ca = fit.m_tau + u[i] + v[k]
    cb = fit.m_tau + u[j] + v[l]
    out = fam.theta_core(ca, cb)
    return float(out) if np.ndim(out) == 0 else out


def fit_transform_model(ds, family="ph", tau=None, use_z=True):
    """Partial-likelihood route: Cox coefficients plus the solved m(tau).

    Returns ``(TransformFit, CoxFit, G)`` where G is the Kaplan-Meier
    estimate of the censoring distribution.
    """
    from .survfit import cox_fit, km_fit

    if tau is None:
        tau = ds.tau
    if tau is None:
        raise ValidationError("no analysis horizon: pass tau or annotate the dataset")
    fam = get_family(family)
    cox = cox_fit(ds, use_z=use_z)
    G = km_fit(ds.y, 1 - ds.delta)
    m = solve_m_tau(ds, cox.beta, cox.gamma if use_z else None, fam, G, tau)
    gamma = cox.gamma if use_z else np.zeros(0)
    tfit = TransformFit(fam, cox.beta, gamma, m, float(tau))
    return tfit, cox, G
