"""Central and noncentral chi-square numerics for residual-test calibration.

Self-contained on top of ``math.lgamma``: regularized incomplete gamma via
power series / Lentz continued fraction, noncentral tail via a Poisson-weighted
mixture of central tails summed outward from the modal weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

_MAX_ITER = 2000
_EPS = 1e-15


def _gamma_p_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series (x < a+1)."""
    if x <= 0.0:
        return 0.0
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0.0:
        raise ValueError(f"gamma shape must be positive, got {a}")
    if x < 0.0:
        raise ValueError(f"gamma argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0.0:
        raise ValueError(f"gamma shape must be positive, got {a}")
    if x < 0.0:
        raise ValueError(f"gamma argument must be nonnegative, got {x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cf(a, x)


def chi2_cdf(dof: int, x: float) -> float:
    _check_dof(dof)
    if x <= 0.0:
        return 0.0
    return gammainc_lower(0.5 * dof, 0.5 * x)


def chi2_sf(dof: int, x: float) -> float:
    _check_dof(dof)
    if x <= 0.0:
        return 1.0
    return gammainc_upper(0.5 * dof, 0.5 * x)


def chi2_pdf(dof: int, x: float) -> float:
    _check_dof(dof)
    if x <= 0.0:
        return 0.0
    a = 0.5 * dof
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_quantile(dof: int, alpha: float) -> float:
    """Threshold tau with chi2_sf(dof, tau) == alpha, to 1e-12 in sf units.

    Wilson-Hilferty start, Newton steps on the survival function, bisection
    safeguard when Newton leaves the bracket.
    """
    _check_dof(dof)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # Wilson-Hilferty normal approximation as the initial guess
    z = _norm_quantile(1.0 - alpha)
    k = float(dof)
    t = k * (1.0 - 2.0 / (9.0 * k) + z * math.sqrt(2.0 / (9.0 * k))) ** 3
    t = max(t, 1e-10)
    lo, hi = 0.0, t
    while chi2_sf(dof, hi) > alpha:
        lo = hi
        hi *= 2.0
    for _ in range(200):
        f = chi2_sf(dof, t) - alpha
        if abs(f) < 1e-13:
            break
        if f > 0.0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        df = -chi2_pdf(dof, t)
        step = f / df if df != 0.0 else 0.0
        t_new = t - step
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) < 1e-14 * max(1.0, t):
            t = t_new
            break
        t = t_new
    return t


def _norm_quantile(p: float) -> float:
    """Standard normal quantile (Acklam rational approximation, ~1e-9)."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    plow, phigh = 0.02425, 1.0 - 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p > phigh:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)


def ncx2_sf(dof: int, lam: float, x: float) -> float:
    """Noncentral chi-square survival probability P(X > x), X ~ chi2(dof, lam).

    Poisson mixture of central chi-square tails with dof+2j degrees of
    freedom, summed outward from the modal Poisson index so the largest
    weights are accumulated first; truncated when the remaining Poisson
    mass is below 1e-14.
    """
    _check_dof(dof)
    if lam < 0.0:
        raise ValueError(f"noncentrality must be nonnegative, got {lam}")
    if x <= 0.0:
        return 1.0
    if lam == 0.0:
        return chi2_sf(dof, x)
    half_lam = 0.5 * lam
    j0 = int(half_lam)
    a0 = 0.5 * dof + j0
    z = 0.5 * x
    # Poisson weight and central tail at the modal index
    log_w0 = -half_lam + j0 * math.log(half_lam) - math.lgamma(j0 + 1.0)
    w0 = math.exp(log_w0)
    q0 = gammainc_upper(a0, z)
    # increment t_j = z^a e^{-z} / Gamma(a+1) links Q(a, z) -> Q(a+1, z)
    log_t0 = a0 * math.log(z) - z - math.lgamma(a0 + 1.0)
    t0 = math.exp(log_t0)

    total = w0 * q0
    used = w0

    # upward sweep: j0+1, j0+2, ...
    w, q, t = w0, q0, t0
    j = j0
    while used < 1.0 - 1e-14:
        j += 1
        w *= half_lam / j
        q += t
        t *= z / (a0 + (j - j0))
        total += w * min(q, 1.0)
        used += w
        # past the Poisson mode the weights decay monotonically; a weight
        # below 1e-18 bounds the remaining mixture mass well under 1e-14
        if (w < 1e-18 and j > half_lam) or j > j0 + 200000:
            break

    # downward sweep: j0-1, ..., 0
    w, q = w0, q0
    t = t0 * (a0 / z) if z > 0 else 0.0  # t_{j-1} = t_j * a_j / z
    for j in range(j0, 0, -1):
        w *= j / half_lam
        q -= t
        t *= (a0 - (j0 - j) - 1.0) / z
        total += w * min(max(q, 0.0), 1.0)
        used += w
        if used >= 1.0 - 1e-14 or w < 1e-18:
            break
    return min(max(total, 0.0), 1.0)


def ncx2_cdf(dof: int, lam: float, x: float) -> float:
    return 1.0 - ncx2_sf(dof, lam, x)


def lambda_for_detection(dof: int, tau: float, rho: float) -> float:
    """Least noncentrality lam with ncx2_sf(dof, lam, tau) >= rho.

    The tail is monotone increasing in lam at fixed tau, so bisection on a
    doubled bracket converges to the unique root of sf(lam) = rho.
    """
    _check_dof(dof)
    if not 0.0 < rho < 1.0:
        raise ValueError(f"target rate must lie in (0, 1), got {rho}")
    floor = chi2_sf(dof, tau)
    if rho <= floor:
        raise ValueError(
            f"target rate {rho} not above the zero-noncentrality tail {floor:.6g}; "
            "threshold already fires at least that often")
    hi = 1.0
    while ncx2_sf(dof, hi, tau) < rho:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("noncentrality bracket exceeded 1e12")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ncx2_sf(dof, mid, tau) < rho:
            lo = mid
        else:
            hi = mid
        if abs(ncx2_sf(dof, 0.5 * (lo + hi), tau) - rho) < 1e-8 and hi - lo < 1e-9 * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


def _check_dof(dof: int) -> None:
    if int(dof) != dof or dof < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")


@dataclass(frozen=True)
class DetectionSpec:
    """Residual-test calibration: threshold at a false-positive rate and the
    noncentrality needed to fire at a target detection rate."""

    dof: int
    alpha: float
    tau: float
    rho: float | None = None
    lam: float | None = None

    @classmethod
    def build(cls, dof: int, alpha: float, rho: float | None = None) -> "DetectionSpec":
        tau = chi2_quantile(dof, alpha)
        lam = lambda_for_detection(dof, tau, rho) if rho is not None else None
        return cls(dof=dof, alpha=alpha, tau=tau, rho=rho, lam=lam)
