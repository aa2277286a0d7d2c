"""Closed-form observationally equivalent parameterisations.

Each constructor takes a parameter set in a non-identified regime and
returns an :class:`EquivalenceCertificate`: the original and an alternative
specification with a different treatment effect, together with the largest
element-wise difference between their observed moments. A certificate with
``valid`` set and a nonzero ``beta_gap`` is a concrete witness that ``beta``
cannot be recovered from the distribution of ``(Y, Z)``.

Free quantities (``delta``, ``b``, the alternative correlation) default to
values that give ``beta_gap`` near ``0.5 |beta| + 0.1`` whenever the valid
region allows it. Alternatives that leave the parameter domain or lose
positive definiteness raise :class:`~spatial_ident.errors.InvalidRegion`.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CaseNotApplicable,
    DomainError,
    InvalidRegion,
    NoValidBetaFound,
    NotPositiveDefinite,
)
from .graph import as_proximity, is_fully_connected, laplacian_spectrum
from .models import (
    BivariateParams,
    CarSPParams,
    LerouxParams,
    LmcParams,
    ModelSpec,
    native_moments,
    spec_from_dict,
)

PARAM_ABS = 1e-10
PARAM_REL = 1e-8
MIN_CERT_GAP = 1e-6


def target_gap(beta: float) -> float:
    """Default size of the treatment-effect shift."""
    return 0.5 * abs(beta) + 0.1


def _zero(x: float) -> bool:
    return abs(x) <= PARAM_ABS


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= PARAM_REL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class EquivalenceCertificate:
    construction: str
    original: ModelSpec
    alternative: ModelSpec
    beta_gap: float
    max_moment_discrepancy: float
    valid: bool
    settings: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def is_certificate(self) -> bool:
        """True when the pair proves non-identifiability of ``beta``."""
        return self.valid and self.beta_gap > MIN_CERT_GAP and self.max_moment_discrepancy <= 1e-8

    def to_dict(self) -> dict:
        return {
            "construction": self.construction,
            "original": self.original.to_dict(),
            "alternative": self.alternative.to_dict(),
            "beta_gap": float(self.beta_gap),
            "max_moment_discrepancy": float(self.max_moment_discrepancy),
            "valid": bool(self.valid),
            "settings": {k: _plain(v) for k, v in self.settings.items()},
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict, W=None) -> "EquivalenceCertificate":
        """Rebuild a certificate; with ``W`` the moment discrepancy is recomputed."""
        orig = spec_from_dict(d["original"])
        alt = spec_from_dict(d["alternative"])
        disc = float(d["max_moment_discrepancy"])
        valid = bool(d["valid"])
        if W is not None:
            disc, valid = _discrepancy(orig, alt, W)
        return cls(d["construction"], orig, alt, abs(alt.beta - orig.beta), disc, valid,
                   dict(d.get("settings", {})), tuple(d.get("notes", ())))


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _discrepancy(orig: ModelSpec, alt: ModelSpec, W) -> tuple[float, bool]:
    m0 = native_moments(orig, W)
    try:
        m1 = native_moments(alt, W)
    except (NotPositiveDefinite, DomainError):
        return float("inf"), False
    return m0.max_abs_discrepancy(m1), True


def _certify(name: str, orig: ModelSpec, build, W, settings: dict, notes=()) -> EquivalenceCertificate:
    """Construct the alternative via ``build()`` and validate it against ``orig``."""
    try:
        alt = build()
    except DomainError as exc:
        raise InvalidRegion(f"{name}: alternative leaves the parameter domain: {exc}") from None
    disc, valid = _discrepancy(orig, alt, W)
    if not valid:
        raise InvalidRegion(f"{name}: alternative is not positive definite")
    notes = list(notes)
    gap = abs(alt.beta - orig.beta)
    if gap <= MIN_CERT_GAP:
        notes.append("degenerate: alternative has the same treatment effect")
    return EquivalenceCertificate(name, orig, alt, gap, disc, valid, settings, tuple(notes))


# ---------------------------------------------------------------------------
# CAR


def car_phi0_alternative(p: CarSPParams, W, delta: float | None = None, zeta: int | None = None) -> EquivalenceCertificate:
    """Alternative for ``phi_u = 0``: rescale ``tau_z`` by ``delta`` and re-solve ``rho``.

    ``tau_z -> delta tau_z``, ``phi_z -> phi_z / delta``,
    ``rho -> zeta sqrt((delta - (1 - rho^2)) / delta)`` and
    ``beta -> beta + (rho - sqrt(delta) rho~) sqrt(tau_z / tau_u)``; requires
    ``delta > 1 - rho^2``.
    """
    if not _zero(p.phi_u):
        raise CaseNotApplicable(f"car_phi0 needs phi_u = 0, got {p.phi_u}")
    s = math.sqrt(p.tau_z / p.tau_u)
    if zeta is None:
        zeta = -1 if p.rho > 0 else 1
    if zeta not in (-1, 1):
        raise DomainError("zeta must be -1 or 1")
    floor = 1.0 - p.rho**2
    if delta is None:
        # |rho - zeta sqrt(delta - floor)| grows with delta when zeta opposes rho
        t = max(target_gap(p.beta) / s - abs(p.rho), 0.1)
        delta = floor + t * t
        if abs(p.phi_z) >= delta:
            delta = 2.0
    if delta <= floor:
        raise InvalidRegion(f"delta must exceed 1 - rho^2 = {floor:.6g}, got {delta}")

    def build():
        rho_t = zeta * math.sqrt((delta - floor) / delta)
        return p.replace(
            tau_z=delta * p.tau_z,
            phi_z=p.phi_z / delta,
            rho=rho_t,
            beta=p.beta + (p.rho - math.sqrt(delta) * rho_t) * s,
        )

    return _certify("car_phi0", p, build, W, {"delta": float(delta), "zeta": int(zeta)})


def car_fullyconnected_parameters(p: CarSPParams, n: int, b: float) -> dict:
    """Tilded parameters of the fully connected construction (unvalidated)."""
    fu = p.phi_u
    m = n - 1.0
    r = ((1 + fu / m) ** -1 - (1 - fu) ** -1) / ((1 + b * fu / m) ** -1 - (1 - b * fu) ** -1)
    rho2tz = p.rho**2 * p.tau_z
    B1 = p.tau_z + p.tau_z * p.phi_z / m - rho2tz / (1 + fu / m) + r * rho2tz / (1 + b * fu / m)
    B2 = p.tau_z - p.tau_z * p.phi_z - rho2tz / (1 - fu) + r * rho2tz / (1 - b * fu)
    s = math.sqrt(p.tau_z / p.tau_u)
    phi_z = (B1 - B2) / (B2 / m + B1)
    tau_z = (m * B1 + B2) / n
    return {
        "r": r, "B1": B1, "B2": B2,
        "phi_u": b * fu,
        "tau_u": p.tau_u / r,
        "sigma2_eps": (1 / (m * p.tau_u)) * (1 / (1 - fu) - r / (1 - b * fu)) + p.sigma2_eps,
        "beta": p.beta + p.rho * s / (1 - fu) - r * p.rho * s / (1 - b * fu),
        "phi_z": phi_z,
        "tau_z": tau_z,
        "rho": p.rho * math.sqrt(r * p.tau_z / tau_z) if r * p.tau_z / tau_z >= 0 else float("nan"),
    }


def _fc_alternative(p: CarSPParams, n: int, b: float) -> CarSPParams:
    t = car_fullyconnected_parameters(p, n, b)
    return p.replace(**{k: t[k] for k in ("tau_u", "tau_z", "phi_u", "phi_z", "rho", "sigma2_eps", "beta")})


def _default_b(p: CarSPParams, W) -> float:
    """Closest ``b`` to 1 reaching the target gap; otherwise the widest valid gap."""
    want = target_gap(p.beta)
    n = as_proximity(W).n
    lim = 1.0 / abs(p.phi_u)
    grid = np.concatenate([1 + np.arange(1, 4001) * 1e-3, 1 - np.arange(1, 4001) * 1e-3])
    grid = grid[np.abs(grid * p.phi_u) < 1]
    grid = grid[np.argsort(np.abs(grid - 1), kind="stable")]
    best, best_gap = None, -1.0
    for b in grid:
        if abs(b) >= lim:
            continue
        try:
            alt = _fc_alternative(p, n, float(b))
            native_moments(alt, W)
        except (DomainError, NotPositiveDefinite, ZeroDivisionError, ValueError):
            continue
        gap = abs(alt.beta - p.beta)
        if gap > best_gap:
            best, best_gap = float(b), gap
        if gap >= want:
            return float(b)
    if best is None:
        raise InvalidRegion("no b in the scanned neighbourhood of 1 gives a valid alternative")
    return best


def car_fullyconnected_alternative(p: CarSPParams, W, b: float | None = None) -> EquivalenceCertificate:
    """Alternative on the complete graph ``W = 11^T - I`` indexed by ``b`` (``b = 1`` is the identity)."""
    W = as_proximity(W)
    if not is_fully_connected(W):
        raise CaseNotApplicable("car_fullyconnected needs the binary complete graph")
    if _zero(p.phi_u) or _zero(p.rho):
        raise CaseNotApplicable("car_fullyconnected needs phi_u != 0 and rho != 0")
    n = W.n
    if b is None:
        b = _default_b(p, W)
    if b == 1.0:
        return _certify("car_fullyconnected", p, lambda: p, W, {"b": 1.0})
    if abs(b * p.phi_u) >= 1:
        raise InvalidRegion(f"b * phi_u = {b * p.phi_u:.6g} leaves (-1, 1)")

    def build():
        t = car_fullyconnected_parameters(p, n, b)
        if not all(math.isfinite(v) for v in t.values()):
            raise DomainError("construction produced non-finite parameters")
        return _fc_alternative(p, n, b)

    return _certify("car_fullyconnected", p, build, W, {"b": float(b)})


# ---------------------------------------------------------------------------
# Leroux


def leroux_equal_lambda_alternative(p: LerouxParams, W) -> EquivalenceCertificate:
    """Sign flip ``rho -> -rho``, ``beta -> beta + 2 rho sigma_u / sigma_z`` when ``lambda_uz = lambda_z``."""
    if p.parsimonious or not _same(p.lambda_uz, p.lambda_z) or _zero(p.rho):
        raise CaseNotApplicable("leroux_equal_lambda needs a free cross term with lambda_uz = lambda_z and rho != 0")
    return _certify(
        "leroux_equal_lambda", p,
        lambda: p.replace(rho=-p.rho, beta=p.beta + 2 * p.rho * p.sigma_u / p.sigma_z),
        W, {},
    )


def _leroux_rho0_case(p: LerouxParams) -> int | None:
    if _same(p.lambda_u, p.lambda_z):
        return 1
    if _zero(p.lambda_z):
        return 2
    if _zero(p.lambda_u):
        return 3
    return None


def leroux_rho0_alternative(p: LerouxParams, W, case: int | None = None,
                            rho_tilde: float | None = None,
                            sigma_u_tilde: float | None = None) -> EquivalenceCertificate:
    """Alternatives with a free cross term and ``rho = 0``.

    Case 1 (``lambda_u = lambda_z``) rescales ``sigma_u`` so that
    ``(1 - rho~^2) sigma_u~^2 = sigma_u^2``. Case 2 (``lambda_z = 0``) moves
    ``rho~^2 sigma_u^2`` into the noise variance. Case 3 (``lambda_u = 0``)
    sets ``lambda_u~ = lambda_z``, ``rho~ = +-1`` and
    ``sigma2_eps~ = sigma_u^2 + sigma2_eps``. In every case the alternative
    keeps ``sigma_z``, ``lambda_z`` and sets ``lambda_uz~ = lambda_z`` and
    ``beta~ = beta - rho~ sigma_u~ / sigma_z``. When several cases hold the
    first one listed applies unless ``case`` is given.
    """
    if p.parsimonious or not _zero(p.rho):
        raise CaseNotApplicable("leroux_rho0 needs a free cross term and rho = 0")
    applicable = _leroux_rho0_case(p)
    if case is None:
        case = applicable
    if case is None:
        raise CaseNotApplicable("leroux_rho0 needs lambda_u = lambda_z, lambda_z = 0 or lambda_u = 0")
    checks = {1: _same(p.lambda_u, p.lambda_z), 2: _zero(p.lambda_z), 3: _zero(p.lambda_u)}
    if case not in checks or not checks[case]:
        raise CaseNotApplicable(f"case {case} does not hold for these parameters")
    want = max(target_gap(p.beta), 0.1)
    ratio = p.sigma_u / p.sigma_z
    common = dict(rho=0.0, lambda_uz=p.lambda_z)

    if case == 1:
        if rho_tilde is None:
            rho_tilde = 0.6
            t = want / ratio
            if rho_tilde / math.sqrt(1 - rho_tilde**2) < t:
                rho_tilde = t / math.sqrt(1 + t * t)
        if not abs(rho_tilde) < 1:
            raise InvalidRegion("case 1 needs |rho~| < 1")
        su = p.sigma_u / math.sqrt(1 - rho_tilde**2)
        alt = dict(common, rho=rho_tilde, sigma_u=su, beta=p.beta - rho_tilde * su / p.sigma_z)
    elif case == 2:
        omega = laplacian_spectrum(W).eigenvalues
        gmax = float(np.max(1 - p.lambda_u + p.lambda_u * omega))
        cap = 1.0 / math.sqrt(gmax)          # |rho~| must stay below this bound
        if rho_tilde is None:
            rho_tilde = min(0.5, 0.99 * cap)
            if rho_tilde * ratio < want:
                rho_tilde = min(want / ratio, 0.99 * cap)
        if abs(rho_tilde) >= cap:
            raise InvalidRegion(f"case 2 needs |rho~| < {cap:.6g}")
        alt = dict(common, rho=rho_tilde, sigma2_eps=p.sigma2_eps + rho_tilde**2 * p.sigma_u**2,
                   beta=p.beta - rho_tilde * ratio)
    else:
        if rho_tilde is None:
            rho_tilde = 1.0
        if abs(rho_tilde) != 1.0:
            raise InvalidRegion("case 3 needs rho~ = +1 or -1")
        if sigma_u_tilde is None:
            sigma_u_tilde = want * p.sigma_z
        alt = dict(common, rho=rho_tilde, lambda_u=p.lambda_z, sigma_u=sigma_u_tilde,
                   sigma2_eps=p.sigma_u**2 + p.sigma2_eps,
                   beta=p.beta - rho_tilde * sigma_u_tilde / p.sigma_z)
    settings = {"case": int(case), "rho_tilde": float(rho_tilde)}
    if case == 3:
        settings["sigma_u_tilde"] = float(sigma_u_tilde)
    return _certify("leroux_rho0", p, lambda: p.replace(**alt), W, settings)


def leroux_pars_alternative(p: LerouxParams, W, rho_tilde: float | None = None,
                            sigma_u_tilde: float | None = None) -> EquivalenceCertificate:
    """Parsimonious alternatives.

    With ``lambda_u = lambda_z`` only ``beta + rho sigma_u / sigma_z`` and
    ``(1 - rho^2) sigma_u^2`` are identified, leaving ``rho~`` free. With
    ``rho = lambda_u = 0`` the confounder can be re-expressed as a perfectly
    correlated copy of ``Z``'s structure plus noise.
    """
    if not p.parsimonious:
        raise CaseNotApplicable("leroux_pars needs the parsimonious cross term")
    want = max(target_gap(p.beta), 0.1)
    if _same(p.lambda_u, p.lambda_z):
        resid = (1 - p.rho**2) * p.sigma_u**2
        if resid <= 0:
            raise InvalidRegion("leroux_pars needs |rho| < 1 when lambda_u = lambda_z")

        def alt_for(rt):
            su = math.sqrt(resid / (1 - rt**2))
            return su, p.beta + (p.rho * p.sigma_u - rt * su) / p.sigma_z

        if rho_tilde is None:
            best = None
            for rt in (0.7, -0.7, 0.9, -0.9, 0.95, -0.95, 0.99, -0.99):
                gap = abs(alt_for(rt)[1] - p.beta)
                if best is None or gap > best[1] + 1e-12:
                    best = (rt, gap)
                if gap >= want:
                    best = (rt, gap)
                    break
            rho_tilde = best[0]
        if not abs(rho_tilde) < 1:
            raise InvalidRegion("leroux_pars needs |rho~| < 1")
        su, beta_t = alt_for(rho_tilde)
        return _certify("leroux_pars", p, lambda: p.replace(rho=rho_tilde, sigma_u=su, beta=beta_t), W,
                        {"regime": "equal_lambda", "rho_tilde": float(rho_tilde)})
    if _zero(p.rho) and _zero(p.lambda_u):
        if rho_tilde is None:
            rho_tilde = 1.0
        if abs(rho_tilde) != 1.0:
            raise InvalidRegion("leroux_pars with rho = lambda_u = 0 needs rho~ = +1 or -1")
        if sigma_u_tilde is None:
            sigma_u_tilde = want * p.sigma_z
        alt = dict(rho=rho_tilde, lambda_u=p.lambda_z, sigma_u=sigma_u_tilde,
                   sigma2_eps=p.sigma_u**2 + p.sigma2_eps,
                   beta=p.beta - rho_tilde * sigma_u_tilde / p.sigma_z)
        return _certify("leroux_pars", p, lambda: p.replace(**alt), W,
                        {"regime": "rho_lambda_u_zero", "rho_tilde": float(rho_tilde),
                         "sigma_u_tilde": float(sigma_u_tilde)})
    raise CaseNotApplicable("leroux_pars needs lambda_u = lambda_z, or rho = lambda_u = 0")


# ---------------------------------------------------------------------------
# LMC and stationary bivariate


def lmc_alternative(p: LmcParams, W, delta: float | None = None) -> EquivalenceCertificate:
    """Loading shift ``beta -> beta - delta``, ``b_t -> b_t + delta a_t``."""
    if delta is None:
        delta = target_gap(p.beta)
    if delta == 0:
        raise CaseNotApplicable("lmc construction needs delta != 0")
    return _certify(
        "lmc", p,
        lambda: p.replace(beta=p.beta - delta, b=tuple(b + delta * a for a, b in zip(p.a, p.b))),
        W, {"delta": float(delta)},
    )


def bivariate_rho0_parameters(p: BivariateParams, beta_tilde: float) -> dict:
    """``sigma_u~`` and ``rho~`` matching the moments of ``p`` at ``beta_tilde``.

    With ``c = (beta - beta~) sigma_z + rho sigma_u`` the alternative is
    ``sigma_u~^2 = (1 - rho^2) sigma_u^2 + c^2`` and ``rho~ = c / sigma_u~``,
    which keeps ``beta + rho sigma_u / sigma_z`` and ``(1 - rho^2) sigma_u^2``.
    """
    c = (p.beta - beta_tilde) * p.sigma_z + p.rho * p.sigma_u
    s2 = (1 - p.rho**2) * p.sigma_u**2 + c * c
    if s2 <= 0:
        return {"sigma_u": float("nan"), "rho": float("nan"), "c": c}
    su = math.sqrt(s2)
    return {"sigma_u": su, "rho": c / su, "c": c}


def bivariate_rho0_alternative(p: BivariateParams, W, beta_tilde: float | None = None,
                               search_halfwidth: float | None = None,
                               min_gap: float = 0.1, steps: int = 401) -> EquivalenceCertificate:
    """Alternative when the three range parameters coincide.

    An explicit ``beta_tilde`` is used as given. Otherwise ``beta~`` is
    searched on ``steps`` grid points within ``search_halfwidth`` of ``beta``
    (default ``max(1, 2 |beta|)``), preferring gaps closest to the default
    target among those at least ``min_gap``.
    """
    if not (_same(p.psi_u, p.psi_z) and _same(p.psi_uz, p.psi_z)):
        raise CaseNotApplicable("bivariate_rho0 needs psi_u = psi_z = psi_uz")

    def build_for(bt):
        t = bivariate_rho0_parameters(p, bt)
        if not math.isfinite(t["sigma_u"]):
            raise DomainError("sigma_u~^2 is not positive")
        return p.replace(sigma_u=t["sigma_u"], rho=t["rho"], beta=bt)

    if beta_tilde is not None:
        return _certify("bivariate_rho0", p, lambda: build_for(beta_tilde), W, {"beta_tilde": float(beta_tilde)})
    h = max(1.0, 2 * abs(p.beta)) if search_halfwidth is None else float(search_halfwidth)
    want = max(target_gap(p.beta), min_gap)
    grid = p.beta + np.linspace(-h, h, steps)
    gaps = np.abs(grid - p.beta)
    order = np.argsort(np.abs(gaps - want), kind="stable")
    for i in order:
        if gaps[i] < min_gap:
            continue
        bt = float(grid[i])
        try:
            return _certify("bivariate_rho0", p, lambda: build_for(bt), W,
                            {"beta_tilde": bt, "search_halfwidth": h, "min_gap": min_gap})
        except InvalidRegion:
            continue
    raise NoValidBetaFound(f"no beta~ within {h:g} of beta with gap >= {min_gap:g} gives a valid alternative")


# ---------------------------------------------------------------------------


CONSTRUCTIONS = {
    "car_phi0": car_phi0_alternative,
    "car_fullyconnected": car_fullyconnected_alternative,
    "leroux_equal_lambda": leroux_equal_lambda_alternative,
    "leroux_rho0": leroux_rho0_alternative,
    "leroux_pars": leroux_pars_alternative,
    "lmc": lmc_alternative,
    "bivariate_rho0": bivariate_rho0_alternative,
}

CONSTRUCTION_FAMILY = {
    "car_phi0": CarSPParams,
    "car_fullyconnected": CarSPParams,
    "leroux_equal_lambda": LerouxParams,
    "leroux_rho0": LerouxParams,
    "leroux_pars": LerouxParams,
    "lmc": LmcParams,
    "bivariate_rho0": BivariateParams,
}


def forge(spec: ModelSpec, W, construction: str | None = None, **options) -> EquivalenceCertificate:
    """Run a named construction, or the one the matching checker cites."""
    if construction is None:
        from .identify import check
        construction = check(spec, W).construction
        if construction is None:
            raise CaseNotApplicable("no construction applies: the checker does not report non-identifiability")
    fn = CONSTRUCTIONS.get(construction)
    if fn is None:
        raise CaseNotApplicable(f"unknown construction {construction!r}; expected one of {sorted(CONSTRUCTIONS)}")
    if not isinstance(spec, CONSTRUCTION_FAMILY[construction]):
        raise CaseNotApplicable(f"{construction} applies to {CONSTRUCTION_FAMILY[construction].FAMILY} models, "
                                f"got {spec.FAMILY}")
    options = {k: v for k, v in options.items() if v is not None}
    accepted = set(inspect.signature(fn).parameters) - {"p", "W"}
    unknown = sorted(set(options) - accepted)
    if unknown:
        raise DomainError(f"{construction} does not take option(s) {unknown}; accepted: {sorted(accepted)}")
    return fn(spec, W, **options)


__all__ = [
    "CONSTRUCTIONS", "EquivalenceCertificate", "bivariate_rho0_alternative",
    "bivariate_rho0_parameters", "car_fullyconnected_alternative", "car_fullyconnected_parameters",
    "car_phi0_alternative", "forge", "leroux_equal_lambda_alternative", "leroux_pars_alternative",
    "leroux_rho0_alternative", "lmc_alternative", "target_gap",
]
