"""Model specifications and their observed-data moment maps.

Every family shares the structural equation ``Y = Z beta + U + eps`` with
``(U, Z)`` jointly Gaussian and ``eps ~ N(0, sigma2_eps I)``. The observable
distribution of ``(Y, Z)`` is pinned down by ``Var(Z)``, ``Cov(Y, Z)`` and
``Var(Y)``, or equivalently by ``Var(Z)``, the regression coefficient matrix
``coef = Cov(Y, Z) Var(Z)^{-1}`` and ``Var(Y | Z)``. Both representations are
computed by :class:`ObservedMoments`, each from its own formula, so that they
can be checked against one another.

Five families are supported:

``car``
    Bivariate CAR model with block precision built from ``W`` and ``D``.
``leroux``
    Leroux CAR model, diagonal in the eigenbasis of ``D - W``, with either a
    free cross parameter ``lambda_uz`` or the parsimonious cross covariance.
``lmc``
    Linear model of coregionalisation over ``T`` latent processes.
``bivariate``
    Stationary bivariate model with one correlation family and three ranges.
``pars_matern``
    Parsimonious bivariate Matern with cross smoothness ``(nu_u + nu_z) / 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Union

import numpy as np
from scipy import linalg

from .errors import DomainError, NotPositiveDefinite, ZeroDegree
from .graph import (
    as_proximity,
    degree_matrix,
    laplacian_spectrum,
    normalized_spectrum,
)
from .specfun import CovFamily, correlation_matrix

COND_WARN = 1e12


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DomainError(msg)


def _finite(name, x):
    _require(math.isfinite(x), f"{name} must be finite, got {x}")


# ---------------------------------------------------------------------------
# parameter sets


class _Params:
    """Mixin providing a family tag and flat dict (de)serialisation."""

    FAMILY: str = ""

    def to_dict(self) -> dict:
        return {"family": self.FAMILY, "params": _params_dict(self)}

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return type(self)(**d)

    @classmethod
    def unchecked(cls, **kw):
        """Build an instance without domain validation (for boundary probes)."""
        obj = object.__new__(cls)
        for f in fields(cls):
            object.__setattr__(obj, f.name, kw.get(f.name, f.default))
        return obj


def _params_dict(p) -> dict:
    out = {}
    for f in fields(p):
        v = getattr(p, f.name)
        if isinstance(v, CovFamily):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = [float(x) for x in v]
        elif isinstance(v, (int, float, np.floating)) and not isinstance(v, bool):
            v = float(v)
        out[f.name] = v
    return out


@dataclass(frozen=True)
class CarSPParams(_Params):
    """Bivariate CAR parameters; ``sigma2_eps`` is ``1 / tau_eps``."""

    tau_u: float
    tau_z: float
    phi_u: float
    phi_z: float
    rho: float
    sigma2_eps: float
    beta: float

    FAMILY = "car"

    def __post_init__(self):
        for f in fields(self):
            _finite(f.name, getattr(self, f.name))
        _require(self.tau_u > 0 and self.tau_z > 0, "tau_u and tau_z must be positive")
        _require(-1 < self.phi_u < 1, f"phi_u must lie in (-1, 1), got {self.phi_u}")
        _require(-1 < self.phi_z < 1, f"phi_z must lie in (-1, 1), got {self.phi_z}")
        _require(-1 < self.rho < 1, f"rho must lie in (-1, 1), got {self.rho}")
        _require(self.sigma2_eps > 0, "sigma2_eps must be positive")


@dataclass(frozen=True)
class LerouxParams(_Params):
    """Leroux CAR parameters. ``lambda_uz=None`` selects the parsimonious cross term."""

    sigma_u: float
    sigma_z: float
    lambda_u: float
    lambda_z: float
    rho: float
    sigma2_eps: float
    beta: float
    lambda_uz: float | None = None

    FAMILY = "leroux"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                _finite(f.name, v)
        _require(self.sigma_u > 0 and self.sigma_z > 0, "sigma_u and sigma_z must be positive")
        for name in ("lambda_u", "lambda_z", "lambda_uz"):
            v = getattr(self, name)
            if v is not None:
                _require(0 <= v < 1, f"{name} must lie in [0, 1), got {v}")
        _require(-1 <= self.rho <= 1, f"rho must lie in [-1, 1], got {self.rho}")
        _require(self.sigma2_eps > 0, "sigma2_eps must be positive")

    @property
    def parsimonious(self) -> bool:
        return self.lambda_uz is None


@dataclass(frozen=True)
class LmcParams(_Params):
    """Linear model of coregionalisation ``Z = sum a_t w_t``, ``U = sum b_t w_t``."""

    a: tuple
    b: tuple
    phi: tuple
    family: CovFamily
    sigma2_eps: float
    beta: float

    FAMILY = "lmc"

    def __post_init__(self):
        for name in ("a", "b", "phi"):
            object.__setattr__(self, name, tuple(float(x) for x in np.atleast_1d(getattr(self, name))))
        if isinstance(self.family, dict):
            object.__setattr__(self, "family", CovFamily.from_dict(self.family))
        T = len(self.a)
        _require(T >= 1, "at least one latent process is required")
        _require(len(self.b) == T and len(self.phi) == T, "a, b and phi must have equal length")
        for x in self.a + self.b + self.phi + (self.sigma2_eps, self.beta):
            _finite("lmc parameter", x)
        _require(all(p > 0 for p in self.phi), "latent ranges phi must be positive")
        _require(any(x != 0 for x in self.a), "some a_t must be nonzero")
        _require(self.sigma2_eps > 0, "sigma2_eps must be positive")

    @property
    def T(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class BivariateParams(_Params):
    """Stationary bivariate model with ranges ``psi_u``, ``psi_z`` and ``psi_uz``."""

    sigma_u: float
    sigma_z: float
    psi_u: float
    psi_z: float
    psi_uz: float
    rho: float
    sigma2_eps: float
    beta: float
    family: CovFamily = field(default_factory=CovFamily.exponential)

    FAMILY = "bivariate"

    def __post_init__(self):
        if isinstance(self.family, dict):
            object.__setattr__(self, "family", CovFamily.from_dict(self.family))
        for f in fields(self):
            if f.name != "family":
                _finite(f.name, getattr(self, f.name))
        _require(self.sigma_u > 0 and self.sigma_z > 0, "sigma_u and sigma_z must be positive")
        _require(min(self.psi_u, self.psi_z, self.psi_uz) > 0, "range parameters must be positive")
        _require(-1 <= self.rho <= 1, f"rho must lie in [-1, 1], got {self.rho}")
        _require(self.sigma2_eps > 0, "sigma2_eps must be positive")


@dataclass(frozen=True)
class ParsMaternParams(_Params):
    """Parsimonious bivariate Matern with common range ``phi``."""

    sigma_u: float
    sigma_z: float
    phi: float
    nu_u: float
    nu_z: float
    rho: float
    sigma2_eps: float
    beta: float

    FAMILY = "pars_matern"

    def __post_init__(self):
        for f in fields(self):
            _finite(f.name, getattr(self, f.name))
        _require(self.sigma_u > 0 and self.sigma_z > 0, "sigma_u and sigma_z must be positive")
        _require(self.phi > 0, "phi must be positive")
        _require(self.nu_u > 0 and self.nu_z > 0, "smoothness parameters must be positive")
        _require(-1 <= self.rho <= 1, f"rho must lie in [-1, 1], got {self.rho}")
        _require(self.sigma2_eps > 0, "sigma2_eps must be positive")

    @property
    def nu_uz(self) -> float:
        return 0.5 * (self.nu_u + self.nu_z)


ModelSpec = Union[CarSPParams, LerouxParams, LmcParams, BivariateParams, ParsMaternParams]

FAMILIES = {
    cls.FAMILY: cls
    for cls in (CarSPParams, LerouxParams, LmcParams, BivariateParams, ParsMaternParams)
}


def spec_to_dict(spec: ModelSpec) -> dict:
    return spec.to_dict()


def spec_from_dict(d: dict) -> ModelSpec:
    """Inverse of :func:`spec_to_dict`; unknown fields are rejected."""
    try:
        tag = d["family"]
        params = dict(d["params"])
    except (KeyError, TypeError) as exc:
        raise DomainError(f"model spec needs 'family' and 'params' keys: {exc}") from None
    cls = FAMILIES.get(tag)
    if cls is None:
        raise DomainError(f"unknown model family {tag!r}; expected one of {sorted(FAMILIES)}")
    known = {f.name for f in fields(cls)}
    extra = set(params) - known
    if extra:
        raise DomainError(f"unknown parameters for {tag}: {sorted(extra)}")
    if "family" in params and isinstance(params["family"], dict):
        params["family"] = CovFamily.from_dict(params["family"])
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {tag}: {exc}") from None


# ---------------------------------------------------------------------------
# observed moments


def _chol(S: np.ndarray, what: str):
    try:
        return linalg.cho_factor(S, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None


def _condition_warning(S: np.ndarray, what: str) -> list[str]:
    ev = np.linalg.eigvalsh(_sym(S))
    if ev[0] <= 0:
        return []
    cond = ev[-1] / ev[0]
    if cond > COND_WARN:
        msg = f"{what} has condition number {cond:.3g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return [msg]
    return []


@dataclass(frozen=True)
class ObservedMoments:
    """Joint (``var_Z``, ``cov_YZ``, ``var_Y``) and conditional
    (``var_Z``, ``coef``, ``var_Y_given_Z``) summaries of ``(Y, Z)``."""

    var_Z: np.ndarray
    cov_YZ: np.ndarray
    var_Y: np.ndarray
    var_Y_given_Z: np.ndarray
    coef: np.ndarray
    notes: tuple = ()

    def __post_init__(self):
        for name in ("var_Z", "cov_YZ", "var_Y", "var_Y_given_Z", "coef"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.var_Z.shape[0]

    @classmethod
    def from_joint(cls, Suu, Suz, Szz, sigma2_eps: float, beta: float) -> "ObservedMoments":
        """Both representations from the latent blocks.

        ``Suz`` is ``Cov(U, Z)`` and need not be symmetric, so the cross term
        of ``Var(Y)`` is ``beta (Suz + Suz^T)``.
        """
        Suu, Suz, Szz = (np.asarray(x, dtype=float) for x in (Suu, Suz, Szz))
        n = Szz.shape[0]
        I = np.eye(n)
        notes = _condition_warning(Szz, "Var(Z)")
        cf = _chol(Szz, "Var(Z)")
        # joint form
        cov_YZ = beta * Szz + Suz
        var_Y = beta**2 * Szz + beta * (Suz + Suz.T) + Suu + sigma2_eps * I
        # conditional form: Suz Szz^{-1} = (Szz^{-1} Suz^T)^T
        A = linalg.cho_solve(cf, Suz.T).T
        coef = beta * I + A
        vyz = Suu - A @ Suz.T + sigma2_eps * I
        return cls(_sym(Szz), cov_YZ, _sym(var_Y), _sym(vyz), coef, tuple(notes))

    @classmethod
    def from_conditional(cls, var_Z, coef, var_Y_given_Z) -> "ObservedMoments":
        var_Z, coef, vyz = (np.asarray(x, dtype=float) for x in (var_Z, coef, var_Y_given_Z))
        cov_YZ = coef @ var_Z
        var_Y = vyz + coef @ var_Z @ coef.T
        return cls(_sym(var_Z), cov_YZ, _sym(var_Y), _sym(vyz), coef)

    def joint_covariance(self) -> np.ndarray:
        """Covariance of the stacked vector ``(Y, Z)``."""
        return np.block([[self.var_Y, self.cov_YZ], [self.cov_YZ.T, self.var_Z]])

    def consistency_error(self) -> float:
        """Relative disagreement between the joint and conditional forms."""
        cf = _chol(self.var_Z, "Var(Z)")
        coef = linalg.cho_solve(cf, self.cov_YZ.T).T
        vyz = self.var_Y - coef @ self.cov_YZ.T
        errs = [
            _rel(coef, self.coef),
            _rel(vyz, self.var_Y_given_Z),
            _rel(self.coef @ self.var_Z, self.cov_YZ),
            _rel(self.var_Y_given_Z + self.coef @ self.var_Z @ self.coef.T, self.var_Y),
        ]
        return max(errs)

    def max_abs_discrepancy(self, other: "ObservedMoments") -> float:
        """Element-wise max absolute difference over the three joint blocks."""
        return max(
            float(np.max(np.abs(self.var_Z - other.var_Z))),
            float(np.max(np.abs(self.cov_YZ - other.cov_YZ))),
            float(np.max(np.abs(self.var_Y - other.var_Y))),
        )

    def rotate(self, P: np.ndarray) -> "ObservedMoments":
        """Moments of ``(P Y, P Z)`` for orthogonal ``P``."""
        def r(M):
            return P @ M @ P.T
        return ObservedMoments(r(self.var_Z), r(self.cov_YZ), r(self.var_Y),
                               r(self.var_Y_given_Z), r(self.coef), self.notes)


def _rel(a, b) -> float:
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


@dataclass(frozen=True)
class JointBlocks:
    """Latent covariance blocks plus the two scalars completing the model."""

    Suu: np.ndarray
    Suz: np.ndarray
    Szz: np.ndarray
    sigma2_eps: float
    beta: float

    def moments(self) -> ObservedMoments:
        return ObservedMoments.from_joint(self.Suu, self.Suz, self.Szz, self.sigma2_eps, self.beta)

    def latent_covariance(self) -> np.ndarray:
        """Covariance of the stacked ``(U, Z)`` vector."""
        return np.block([[self.Suu, self.Suz], [self.Suz.T, self.Szz]])


# ---------------------------------------------------------------------------
# positive definiteness


@dataclass(frozen=True)
class PDReport:
    is_pd: bool
    schur_min_eig: float
    zz_min_eig: float
    sufficient_bound_holds: bool


def pd_check(Suu, Suz, Szz) -> PDReport:
    """Schur-complement test for ``[[Suu, Suz], [Suz^T, Szz]]``.

    The matrix is positive definite iff ``Szz`` and
    ``Suu - Suz Szz^{-1} Suz^T`` are. The cheaper sufficient condition
    ``lambda_min(Suu) lambda_min(Szz) > sigma_max(Suz)^2`` is reported
    separately and never overrides the exact verdict.
    """
    Suu, Suz, Szz = (np.asarray(x, dtype=float) for x in (Suu, Suz, Szz))
    if not (Suu.shape == Suz.shape == Szz.shape and Suu.shape[0] == Suu.shape[1]):
        raise DomainError("pd_check needs three square blocks of equal size")
    zz_min = float(np.linalg.eigvalsh(_sym(Szz))[0])
    uu_min = float(np.linalg.eigvalsh(_sym(Suu))[0])
    smax = float(np.linalg.norm(Suz, 2))
    bound = uu_min > 0 and zz_min > 0 and uu_min * zz_min > smax**2
    try:
        cf = linalg.cho_factor(Szz, lower=True)
    except linalg.LinAlgError:
        return PDReport(False, float("nan"), zz_min, bound)
    schur = _sym(Suu - Suz @ linalg.cho_solve(cf, Suz.T))
    schur_min = float(np.linalg.eigvalsh(schur)[0])
    try:
        np.linalg.cholesky(schur)
        ok = True
    except np.linalg.LinAlgError:
        ok = False
    return PDReport(ok, schur_min, zz_min, bound)


# ---------------------------------------------------------------------------
# CAR


def car_joint_precision(p: CarSPParams, W) -> np.ndarray:
    """Block precision of ``(U, Z)``; raises if its Cholesky factorisation fails."""
    W = as_proximity(W)
    d = degree_matrix(W).diag
    if np.any(d <= 0):
        raise ZeroDegree(f"locations {np.flatnonzero(d <= 0).tolist()} have zero degree")
    D = np.diag(d)
    A = W.entries
    c = -p.rho * math.sqrt(p.tau_u * p.tau_z)
    Q = np.block([
        [p.tau_u * (D - p.phi_u * A), c * D],
        [c * D, p.tau_z * (D - p.phi_z * A)],
    ])
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("CAR joint precision is not positive definite") from None
    return Q


def car_joint_blocks(p: CarSPParams, W) -> JointBlocks:
    """Latent blocks by dense inversion of the joint precision."""
    Q = car_joint_precision(p, W)
    n = Q.shape[0] // 2
    S = linalg.cho_solve(linalg.cho_factor(Q, lower=True), np.eye(2 * n))
    S = _sym(S)
    return JointBlocks(S[:n, :n], S[:n, n:], S[n:, n:], p.sigma2_eps, p.beta)


def _car_spectral_terms(p: CarSPParams, lam: np.ndarray):
    gu = 1.0 - p.phi_u * lam
    gz = 1.0 - p.phi_z * lam
    det = gu * gz - p.rho**2
    if np.any(gu <= 0) or np.any(det <= 0):
        raise NotPositiveDefinite(
            f"CAR precision not positive definite: min (1-phi_u lam)(1-phi_z lam)-rho^2 = {det.min():.3g}"
        )
    return gu, gz, det


def car_observed_moments(p: CarSPParams, W) -> ObservedMoments:
    """Observed moments through the normalised-adjacency eigenbasis.

    With ``D^{-1/2} W D^{-1/2} = Gamma Lambda Gamma^T`` and
    ``g_U = 1 - phi_u Lambda``::

        Var(Z)^{-1} = D^{1/2} Gamma tau_z (1 - phi_z Lambda - rho^2 / g_U) Gamma^T D^{1/2}
        Var(Y|Z)    = tau_u^{-1} D^{-1/2} Gamma g_U^{-1} Gamma^T D^{-1/2} + sigma2_eps I
        coef        = beta I + rho sqrt(tau_z / tau_u) D^{-1/2} Gamma g_U^{-1} Gamma^T D^{1/2}
    """
    W = as_proximity(W)
    D = degree_matrix(W)
    spec = normalized_spectrum(W, D)
    lam, G = spec.eigenvalues, spec.eigenvectors
    gu, gz, _ = _car_spectral_terms(p, lam)
    s = np.sqrt(D.diag)
    L = G / s[:, None]            # D^{-1/2} Gamma
    R = G * s[:, None]            # D^{1/2} Gamma
    n = W.n
    var_Z = (L / (p.tau_z * (gz - p.rho**2 / gu))) @ L.T
    vyz = (L / (p.tau_u * gu)) @ L.T + p.sigma2_eps * np.eye(n)
    coef = p.beta * np.eye(n) + p.rho * math.sqrt(p.tau_z / p.tau_u) * (L / gu) @ R.T
    return ObservedMoments.from_conditional(var_Z, coef, vyz)


# ---------------------------------------------------------------------------
# Leroux


def _leroux_g(lam: float, omega: np.ndarray) -> np.ndarray:
    g = 1.0 - lam + lam * omega
    if np.any(g <= 0):
        raise DomainError("1 - lambda + lambda * omega must be positive")
    return g


def leroux_spectral_diagonals(p: LerouxParams, omega: np.ndarray):
    """Per-frequency ``(Suu, Suz, Szz)`` on the Laplacian eigenvalues ``omega``."""
    omega = np.asarray(omega, dtype=float)
    gu = _leroux_g(p.lambda_u, omega)
    gz = _leroux_g(p.lambda_z, omega)
    suu = p.sigma_u**2 / gu
    szz = p.sigma_z**2 / gz
    if p.parsimonious:
        suz = p.rho * p.sigma_u * p.sigma_z / np.sqrt(gu * gz)
    else:
        suz = p.rho * p.sigma_u * p.sigma_z / _leroux_g(p.lambda_uz, omega)
    # each 2x2 frequency block must be PSD; sigma2_eps > 0 then makes (Y, Z) PD
    gap = suu * szz - suz**2
    if np.any(gap < -1e-12 * suu * szz):
        raise NotPositiveDefinite(
            f"Leroux cross covariance too large: min Suu*Szz - Suz^2 = {gap.min():.3g}"
        )
    return suu, suz, szz


def leroux_joint_blocks(p: LerouxParams, W, coordinates: str = "spectral") -> JointBlocks:
    spec = laplacian_spectrum(W)
    suu, suz, szz = leroux_spectral_diagonals(p, spec.eigenvalues)
    blocks = [np.diag(x) for x in (suu, suz, szz)]
    if coordinates == "location":
        P = spec.eigenvectors
        blocks = [_sym(P @ B @ P.T) for B in blocks]
    elif coordinates != "spectral":
        raise DomainError(f"coordinates must be 'spectral' or 'location', got {coordinates!r}")
    return JointBlocks(*blocks, p.sigma2_eps, p.beta)


def leroux_observed_moments(p: LerouxParams, W, coordinates: str = "spectral") -> ObservedMoments:
    """Observed moments of ``(P^T Y, P^T Z)`` (default) or of ``(Y, Z)``.

    With ``g_l = 1 - l + l Omega`` the spectral forms are diagonal::

        Var(Z')     = sigma_z^2 / g_Z
        coef        = beta + rho (sigma_u / sigma_z) g_Z / g_UZ          (free cross)
                    = beta + rho (sigma_u / sigma_z) sqrt(g_Z / g_U)     (parsimonious)
        Var(Y'|Z')  = sigma_u^2 / g_U + sigma2_eps - rho^2 sigma_u^2 g_Z / g_UZ^2
                    = (1 - rho^2) sigma_u^2 / g_U + sigma2_eps
    """
    spec = laplacian_spectrum(W)
    omega = spec.eigenvalues
    suu, suz, szz = leroux_spectral_diagonals(p, omega)
    gu = _leroux_g(p.lambda_u, omega)
    gz = _leroux_g(p.lambda_z, omega)
    ratio = p.rho * p.sigma_u / p.sigma_z
    if p.parsimonious:
        c = p.beta + ratio * np.sqrt(gz / gu)
        v = (1 - p.rho**2) * p.sigma_u**2 / gu + p.sigma2_eps
    else:
        guz = _leroux_g(p.lambda_uz, omega)
        c = p.beta + ratio * gz / guz
        v = p.sigma_u**2 / gu + p.sigma2_eps - p.rho**2 * p.sigma_u**2 * gz / guz**2
    m = ObservedMoments.from_conditional(np.diag(szz), np.diag(c), np.diag(v))
    if coordinates == "location":
        return m.rotate(spec.eigenvectors)
    if coordinates != "spectral":
        raise DomainError(f"coordinates must be 'spectral' or 'location', got {coordinates!r}")
    return m


# ---------------------------------------------------------------------------
# LMC and stationary bivariate models


def lmc_components(p: LmcParams, W) -> list[np.ndarray]:
    W = as_proximity(W)
    return [correlation_matrix(p.family, phi, W.entries) for phi in p.phi]


def lmc_joint_blocks(p: LmcParams, W) -> JointBlocks:
    comps = lmc_components(p, W)
    Suu = sum(b * b * S for b, S in zip(p.b, comps))
    Suz = sum(a * b * S for a, b, S in zip(p.a, p.b, comps))
    Szz = sum(a * a * S for a, S in zip(p.a, comps))
    return JointBlocks(Suu, Suz, Szz, p.sigma2_eps, p.beta)


def lmc_joint_moments(p: LmcParams, W) -> ObservedMoments:
    """Moments written through the loadings ``beta a_t + b_t`` of ``Y``.

    ``Var(Z) = sum a_t^2 S_t``, ``Cov(Y, Z) = sum (beta a_t + b_t) a_t S_t`` and
    ``Var(Y) = sigma2_eps I + sum (beta a_t + b_t)^2 S_t``.
    """
    comps = lmc_components(p, W)
    n = comps[0].shape[0]
    load = [p.beta * a + b for a, b in zip(p.a, p.b)]
    var_Z = sum(a * a * S for a, S in zip(p.a, comps))
    cov_YZ = sum(c * a * S for c, a, S in zip(load, p.a, comps))
    var_Y = p.sigma2_eps * np.eye(n) + sum(c * c * S for c, S in zip(load, comps))
    notes = _condition_warning(var_Z, "Var(Z)")
    cf = _chol(var_Z, "Var(Z)")
    coef = linalg.cho_solve(cf, cov_YZ.T).T
    vyz = var_Y - coef @ cov_YZ.T
    return ObservedMoments(var_Z, cov_YZ, var_Y, _sym(vyz), coef, tuple(notes))


def bivariate_joint_blocks(p: BivariateParams | ParsMaternParams, W) -> JointBlocks:
    W = as_proximity(W)
    if isinstance(p, ParsMaternParams):
        def C(nu):
            return correlation_matrix(CovFamily.matern(nu), p.phi, W.entries)
        Cu, Cz, Cuz = C(p.nu_u), C(p.nu_z), C(p.nu_uz)
    else:
        Cu, Cz, Cuz = (correlation_matrix(p.family, psi, W.entries) for psi in (p.psi_u, p.psi_z, p.psi_uz))
    Suu = p.sigma_u**2 * Cu
    Szz = p.sigma_z**2 * Cz
    Suz = p.rho * p.sigma_u * p.sigma_z * Cuz
    rep = pd_check(Suu, Suz, Szz)
    if not rep.is_pd:
        raise NotPositiveDefinite(
            f"{p.FAMILY} joint covariance not positive definite "
            f"(min Schur eigenvalue {rep.schur_min_eig:.3g})"
        )
    return JointBlocks(Suu, Suz, Szz, p.sigma2_eps, p.beta)


def bivariate_joint_moments(p: BivariateParams | ParsMaternParams, W) -> ObservedMoments:
    return bivariate_joint_blocks(p, W).moments()


# ---------------------------------------------------------------------------
# dispatch


def joint_blocks(spec: ModelSpec, W) -> JointBlocks:
    """Latent blocks in location coordinates for any family."""
    if isinstance(spec, CarSPParams):
        return car_joint_blocks(spec, W)
    if isinstance(spec, LerouxParams):
        return leroux_joint_blocks(spec, W, coordinates="location")
    if isinstance(spec, LmcParams):
        return lmc_joint_blocks(spec, W)
    if isinstance(spec, (BivariateParams, ParsMaternParams)):
        return bivariate_joint_blocks(spec, W)
    raise DomainError(f"unsupported model spec {type(spec).__name__}")


def observed_moments(spec: ModelSpec, W) -> ObservedMoments:
    """Family-specific moment map, always in location coordinates."""
    if isinstance(spec, CarSPParams):
        return car_observed_moments(spec, W)
    if isinstance(spec, LerouxParams):
        return leroux_observed_moments(spec, W, coordinates="location")
    if isinstance(spec, LmcParams):
        return lmc_joint_moments(spec, W)
    if isinstance(spec, (BivariateParams, ParsMaternParams)):
        return bivariate_joint_moments(spec, W)
    raise DomainError(f"unsupported model spec {type(spec).__name__}")


def native_moments(spec: ModelSpec, W) -> ObservedMoments:
    """Moments in the coordinates the family's identifiability arguments use.

    Leroux models are compared in spectral coordinates; everything else in
    location coordinates.
    """
    if isinstance(spec, LerouxParams):
        return leroux_observed_moments(spec, W, coordinates="spectral")
    return observed_moments(spec, W)


__all__ = [
    "BivariateParams", "CarSPParams", "FAMILIES", "JointBlocks", "LerouxParams",
    "LmcParams", "ModelSpec", "ObservedMoments", "PDReport", "ParsMaternParams",
    "bivariate_joint_blocks", "bivariate_joint_moments", "car_joint_blocks",
    "car_joint_precision", "car_observed_moments", "joint_blocks", "leroux_joint_blocks",
    "leroux_observed_moments", "leroux_spectral_diagonals", "lmc_joint_blocks",
    "lmc_joint_moments", "native_moments", "observed_moments", "pd_check",
    "spec_from_dict", "spec_to_dict",
]
