"""Special functions and stationary covariance families.

The modified Bessel function of the second kind is computed with Temme's
series for ``z < 2`` and Steed's continued fraction (CF2) for ``z >= 2`` at a
fractional order ``|mu| <= 1/2``, followed by forward recurrence in the order.
The recurrence is run on ratios ``K_{v+1}/K_v`` and accumulated in log space,
so ``log K_v(z)`` stays finite where ``K_v(z)`` itself would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceFailure, DomainError, DuplicateParameter

EPS = 1e-16
_SERIES_SWITCH = 2.0
_MAX_ITER = 100_000

# Taylor coefficients a_k of 1/Gamma(x) = sum_{k>=1} a_k x^k.
_RGAMMA = (
    0.0,
    1.0,
    0.5772156649015328606065,
    -0.655878071520253881077,
    -0.042002635034095235529,
    0.1665386113822914895017,
    -0.04219773455554433674821,
    -0.009621971527876973562115,
    0.007218943246663099542395,
    -0.001165167591859065112114,
    -0.0002152416741149509728157,
    0.0001280502823881161861532,
    -0.00002013485478078823865569,
    -0.000001250493482142670657345,
    0.000001133027231981695882374,
    -2.05633841697760710345e-7,
    6.116095104481415817862e-9,
    5.002007644469222930056e-9,
    -1.181274570487020144588e-9,
    1.043426711691100510492e-10,
    7.78226343990507125405e-12,
    -3.696805618642205708188e-12,
    5.100370287454475979015e-13,
    -2.058326053566506783222e-14,
    -5.34812253942301798237e-15,
    1.226778628238260790159e-15,
    -1.181259301697458769514e-16,
    1.18669225475160033258e-18,
    1.412380655318031781556e-18,
    -2.298745684435370206592e-19,
    1.714406321927337433384e-20,
)


def gamma(x: float) -> float:
    return math.gamma(x)


def lgamma(x: float) -> float:
    return math.lgamma(x)


def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    """Return gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for ``|mu| <= 1/2``.

    With ``1/Gamma(1+x) = sum_k a_k x^(k-1)``, gam1 = (1/Gamma(1-mu) -
    1/Gamma(1+mu)) / (2 mu) keeps only the even-k terms, so it is free of
    cancellation near ``mu = 0``.
    """
    mu2 = mu * mu
    gam1 = 0.0
    gam2 = 0.0
    p = 1.0
    for k in range(2, len(_RGAMMA), 2):
        gam1 -= _RGAMMA[k] * p
        gam2 += _RGAMMA[k - 1] * p
        p *= mu2
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


def _k_fractional(mu: float, x: float) -> tuple[float, float]:
    """``(log K_mu(x), log(K_{mu+1}(x)/K_mu(x)))`` for ``|mu| <= 1/2``."""
    if x < _SERIES_SWITCH:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < EPS else pimu / math.sin(pimu)
        d = math.log(2.0) - math.log(x)  # avoids log(0) when x / 2 underflows
        e = mu * d
        fact2 = 1.0 if abs(e) < EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _temme_gammas(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAX_ITER):
            ff = (i * ff + p + q) / (i * i - mu * mu)
            c *= d / i
            p /= i - mu
            q /= i + mu
            term = c * ff
            total += term
            total1 += c * (p - i * ff)
            if abs(term) < abs(total) * EPS:
                break
        else:
            raise ConvergenceFailure(f"Temme series for K_{mu}({x}) did not converge")
        # the ratio is about 2 mu / x and overflows for x near the underflow limit
        log_total = math.log(total)
        return log_total, math.log(total1) - log_total + math.log(2.0) - math.log(x)
    # Steed's algorithm for the continued fraction CF2
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAX_ITER):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < EPS:
            break
    else:
        raise ConvergenceFailure(f"continued fraction for K_{mu}({x}) did not converge")
    h = a1 * h
    log_kmu = 0.5 * math.log(math.pi / (2.0 * x)) - x - math.log(s)
    return log_kmu, math.log((mu + x + 0.5 - h) / x)


def log_bessel_k(nu: float, z: float) -> float:
    """Natural log of the modified Bessel function ``K_nu(z)``, ``z > 0``."""
    if not z > 0.0 or not math.isfinite(z):
        raise DomainError(f"bessel_k requires finite z > 0, got {z}")
    nu = abs(float(nu))
    nl = int(nu + 0.5)
    mu = nu - nl
    log_k, log_ratio = _k_fractional(mu, z)
    log_z = math.log(z)
    # K_{m+1}/K_m = 2m/z + K_{m-1}/K_m, carried in log space
    for i in range(1, nl + 1):
        log_k += log_ratio
        a = math.log(2.0 * (mu + i)) - log_z
        b = -log_ratio
        hi, lo = (a, b) if a >= b else (b, a)
        log_ratio = hi + math.log1p(math.exp(lo - hi))
    return log_k


def bessel_k(nu: float, z: float) -> float:
    """Modified Bessel function of the second kind, ``K_nu(z) = K_{-nu}(z)``.

    Relative accuracy is about 1e-14 for ``|nu| <= 50`` and
    ``z in [1e-6, 700]``; results outside the double range over/underflow.
    """
    return math.exp(log_bessel_k(nu, z))


def matern(phi: float, nu: float, w: float) -> float:
    """Matern correlation ``2^{1-nu}/Gamma(nu) (w/phi)^nu K_nu(w/phi)``."""
    if not phi > 0.0 or not nu > 0.0:
        raise DomainError(f"matern needs phi > 0 and nu > 0, got phi={phi}, nu={nu}")
    if w < 0.0:
        raise DomainError(f"distance must be nonnegative, got {w}")
    if w == 0.0:
        return 1.0
    z = w / phi
    if z == 0.0:  # w / phi underflowed
        return 1.0
    if z > 745.0:
        return 0.0
    log_c = (1.0 - nu) * math.log(2.0) - math.lgamma(nu) + nu * math.log(z) + log_bessel_k(nu, z)
    # near w = 0 the two large logs cancel; keep the result a correlation
    return min(1.0, math.exp(log_c))


# ---------------------------------------------------------------------------
# covariance families

FAMILY_KINDS = ("exponential", "gaussian", "powered_exponential", "spherical", "wave", "matern")
# families covered by the powered-exponential linear-independence argument
MONOTONE_POWER_FAMILIES = ("exponential", "gaussian", "powered_exponential")


@dataclass(frozen=True)
class CovFamily:
    """A one-parameter stationary correlation family ``C(psi, w)`` with ``C(psi, 0) = 1``.

    ``psi`` is always a range parameter. ``exponent`` fixes the power of the
    powered exponential family and ``nu`` fixes the Matern smoothness.
    """

    kind: str
    exponent: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise DomainError(f"unknown covariance family {self.kind!r}")
        if self.kind == "powered_exponential":
            if self.exponent is None or not self.exponent > 0:
                raise DomainError("powered exponential needs exponent > 0")
        elif self.exponent is not None:
            raise DomainError(f"{self.kind} takes no exponent")
        if self.kind == "matern":
            if self.nu is None or not self.nu > 0:
                raise DomainError("matern family needs nu > 0")
        elif self.nu is not None:
            raise DomainError(f"{self.kind} takes no smoothness")

    @classmethod
    def exponential(cls):
        return cls("exponential")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def powered_exponential(cls, c: float):
        return cls("powered_exponential", exponent=float(c))

    @classmethod
    def spherical(cls):
        return cls("spherical")

    @classmethod
    def wave(cls):
        return cls("wave")

    @classmethod
    def matern(cls, nu: float):
        return cls("matern", nu=float(nu))

    def __call__(self, psi, w):
        return cov_eval(self, psi, w)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.exponent is not None:
            d["exponent"] = self.exponent
        if self.nu is not None:
            d["nu"] = self.nu
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CovFamily":
        return cls(d["kind"], exponent=d.get("exponent"), nu=d.get("nu"))


def cov_eval(family: CovFamily, psi: float, w):
    """Evaluate ``C(psi, w)`` elementwise; returns a float for scalar ``w``."""
    psi = float(psi)
    if not psi > 0.0 or not math.isfinite(psi):
        raise DomainError(f"{family.kind} range parameter must be positive, got {psi}")
    arr = np.asarray(w, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError("distances must be finite and nonnegative")
    t = arr / psi
    kind = family.kind
    if kind == "exponential":
        out = np.exp(-t)
    elif kind == "gaussian":
        out = np.exp(-t * t)
    elif kind == "powered_exponential":
        out = np.exp(-t**family.exponent)
    elif kind == "spherical":
        out = np.where(t <= 1.0, 1.0 - 1.5 * t + 0.5 * t**3, 0.0)
    elif kind == "wave":
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(t > 0.0, np.sin(t) / np.where(t > 0.0, t, 1.0), 1.0)
    else:
        flat = t.ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.array([matern(1.0, family.nu, u) for u in uniq])
        out = vals[inv].reshape(t.shape)
    if np.ndim(w) == 0:
        return float(out)
    return out


def correlation_matrix(family: CovFamily, psi: float, W) -> np.ndarray:
    """``C(psi, W_ij)`` for every pair, with an exact unit diagonal."""
    W = np.asarray(getattr(W, "entries", W), dtype=float)
    C = cov_eval(family, psi, W)
    np.fill_diagonal(C, 1.0)
    return C


# ---------------------------------------------------------------------------
# K-linear independence

@dataclass(frozen=True)
class LinIndepVerdict:
    K: int
    singular_values: tuple[float, ...]
    smallest_singular_value: float
    largest_singular_value: float
    rank_tol: float
    full_rank: bool
    design_matrix_shape: tuple[int, int]

    @property
    def ratio(self) -> float:
        if self.largest_singular_value == 0.0:
            return 0.0
        return self.smallest_singular_value / self.largest_singular_value


def design_matrix(family: CovFamily, psi_list: Sequence[float], S, with_intercept: bool = False) -> np.ndarray:
    S = np.asarray(sorted(set(float(s) for s in np.ravel(S))))
    cols = [cov_eval(family, psi, S) for psi in psi_list]
    if with_intercept:
        cols.append(np.ones_like(S))
    return np.column_stack(cols)


def _check_distinct(psi_list, tol=1e-12):
    vals = [float(p) for p in psi_list]
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            if abs(vals[i] - vals[j]) <= tol * max(1.0, abs(vals[i]), abs(vals[j])):
                raise DuplicateParameter(f"parameters {vals[i]} and {vals[j]} coincide")


def k_linear_independence(
    family: CovFamily,
    psi_list: Sequence[float],
    S,
    with_intercept: bool = False,
    rank_tol: float = 1e-10,
) -> LinIndepVerdict:
    """Numerical test that ``sum_k c_k C(psi_k, w) = 0`` on ``S`` forces ``c = 0``.

    The distinct values of ``S`` form the rows of the design matrix, one
    column per parameter (plus a constant column with ``with_intercept``).
    Full rank means the smallest singular value exceeds
    ``rank_tol * largest``. Correlations are bounded by one, so a design
    whose singular values all sit at rounding level (for example two wave
    correlations evaluated only at their common zeros) is treated as the
    zero matrix and reported rank deficient.
    """
    _check_distinct(psi_list)
    K = len(psi_list)
    M = design_matrix(family, psi_list, S, with_intercept)
    need = K + (1 if with_intercept else 0)
    if M.shape[0] < need:
        raise DomainError(f"need at least {need} distinct points in S, got {M.shape[0]}")
    sv = np.linalg.svd(M, compute_uv=False)
    smax = float(sv[0]) if sv.size else 0.0
    smin = float(sv[-1]) if sv.size else 0.0
    noise = 64 * EPS * math.sqrt(M.size)
    return LinIndepVerdict(
        K=K,
        singular_values=tuple(float(s) for s in sv),
        smallest_singular_value=smin,
        largest_singular_value=smax,
        rank_tol=rank_tol,
        full_rank=bool(smax > noise and smin > rank_tol * smax),
        design_matrix_shape=M.shape,
    )


def wave_crossings(phi: float, phi_prime: float, count: int, max_steps: int = 200) -> list[float]:
    """Distances ``w > 0`` where two wave correlations with ranges phi, phi' agree.

    With ``alpha = max/min > 1`` and ``z = w / max(phi, phi')`` the crossings
    solve ``g(z) = sin z - sin(alpha z)/alpha = 0``. For each ``n >= 1`` the
    interval ``(k pi/alpha, (k+1) pi/alpha)`` with ``k = floor(alpha n)``
    contains ``n pi`` and ``g`` changes sign across it; when ``alpha n`` is an
    integer, ``z = n pi`` is itself a root.
    """
    if not phi > 0 or not phi_prime > 0:
        raise DomainError("wave ranges must be positive")
    _check_distinct([phi, phi_prime])
    big, small = max(phi, phi_prime), min(phi, phi_prime)
    alpha = big / small

    def g(z):
        return math.sin(z) - math.sin(alpha * z) / alpha

    out = []
    n = 0
    while len(out) < count:
        n += 1
        an = alpha * n
        k = math.floor(an)
        if abs(an - round(an)) <= 1e-12 * an:
            out.append(n * math.pi * big)
            continue
        lo, hi = k * math.pi / alpha, (k + 1) * math.pi / alpha
        glo, ghi = g(lo), g(hi)
        if glo * ghi > 0:
            raise ConvergenceFailure(f"bracket ({lo}, {hi}) does not change sign")
        for _ in range(max_steps):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm == 0.0 or hi - lo <= 4 * EPS * hi:
                break
            if glo * gm < 0:
                hi, ghi = mid, gm
            else:
                lo, glo = mid, gm
        else:
            raise ConvergenceFailure(f"bisection near z={n * math.pi} did not close in {max_steps} steps")
        out.append(0.5 * (lo + hi) * big)
    return out


def spherical_gap_witness(S, K: int = 4) -> tuple[list[float], np.ndarray]:
    """Ranges and coefficients making ``K >= 4`` spherical correlations vanish on ``S``.

    All ranges are placed strictly inside the largest gap of ``S`` (or beyond
    its maximum), so on every point of ``S`` each correlation is either the
    cubic ``1 - 1.5 w/phi + 0.5 (w/phi)^3`` or zero. The returned coefficient
    vector spans the null space of the ``3 x K`` cubic-coefficient matrix.
    """
    if K < 4:
        raise DomainError("a spherical witness needs K >= 4")
    pts = np.sort(np.unique(np.asarray(S, dtype=float)))
    if pts.size == 0:
        raise DomainError("empty distance set")
    edges = np.concatenate([pts, [2.0 * pts[-1] + 1.0]])
    gaps = np.diff(edges)
    g = int(np.argmax(gaps))
    lo, hi = edges[g], edges[g + 1]
    phis = list(lo + (hi - lo) * (np.arange(1, K + 1) / (K + 1)))
    A = np.vstack([np.ones(K), 1.0 / np.asarray(phis), 1.0 / np.asarray(phis) ** 3])
    _, _, vt = np.linalg.svd(A)
    coef = vt[-1]
    return phis, coef
