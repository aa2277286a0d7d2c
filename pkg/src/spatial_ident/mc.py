"""Simulation, exact Gaussian likelihood and multi-start maximum likelihood.

Data consist of ``r`` independent replicates of ``(Y, Z)`` over the same
``n`` locations. The log-likelihood depends on the data only through the
``2n x 2n`` scatter matrix of the stacked rows ``(Y_k, Z_k)``, which is
computed once per dataset.

Optimisation runs L-BFGS-B on transformed coordinates: logs for scales and
ranges, ``atanh`` for correlations and CAR dependence parameters, logits for
Leroux mixing parameters. Invalid points (non positive definite covariance,
out-of-domain values) receive a large penalty instead of an exception.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import linalg, optimize

from .errors import AllStartsFailed, DomainError, NotPositiveDefinite
from .graph import ProximityMatrix, as_proximity
from .models import (
    BivariateParams,
    CarSPParams,
    LerouxParams,
    LmcParams,
    ModelSpec,
    ParsMaternParams,
    joint_blocks,
    observed_moments,
)

log = logging.getLogger(__name__)

PENALTY = 1e10
LOG2PI = math.log(2 * math.pi)


def max_threads() -> int:
    """Worker cap from ``SPATIAL_IDENT_THREADS`` (default: CPU count)."""
    env = os.environ.get("SPATIAL_IDENT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SPATIAL_IDENT_THREADS=%r", env)
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    """``r`` replicates of ``(Y, Z)``; each row is one realisation over ``n`` locations."""

    Y: np.ndarray
    Z: np.ndarray
    W: ProximityMatrix
    seed: int | None = None
    scatter: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float, ndmin=2)
        Z = np.array(self.Z, dtype=float, ndmin=2)
        if Y.shape != Z.shape:
            raise DomainError(f"Y and Z shapes differ: {Y.shape} vs {Z.shape}")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
            raise DomainError("dataset has non-finite entries")
        W = as_proximity(self.W)
        if Y.shape[1] != W.n:
            raise DomainError(f"dataset has {Y.shape[1]} locations but the graph has {W.n}")
        X = np.hstack([Y, Z])
        for name, a in (("Y", Y), ("Z", Z), ("scatter", X.T @ X)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "W", W)

    @property
    def r(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1]


def _latent_factor(S: np.ndarray) -> np.ndarray:
    """``F`` with ``F F^T = S`` (Cholesky, or an eigen square root when singular)."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        ev, V = np.linalg.eigh(0.5 * (S + S.T))
        if ev[0] < -1e-10 * max(1.0, ev[-1]):
            raise NotPositiveDefinite(f"latent covariance has eigenvalue {ev[0]:.3g}") from None
        return V * np.sqrt(np.clip(ev, 0.0, None))


def sample(spec: ModelSpec, W, r: int, seed: int) -> Dataset:
    """Draw ``r`` replicates of ``Y = Z beta + U + eps`` with ``(U, Z) ~ N(0, Sigma)``."""
    if r < 1:
        raise DomainError("need at least one replicate")
    W = as_proximity(W)
    blocks = joint_blocks(spec, W)
    n = W.n
    F = _latent_factor(blocks.latent_covariance())
    rng = np.random.default_rng(seed)
    UZ = rng.standard_normal((r, 2 * n)) @ F.T
    eps = math.sqrt(blocks.sigma2_eps) * rng.standard_normal((r, n))
    U, Z = UZ[:, :n], UZ[:, n:]
    Y = spec.beta * Z + U + eps
    return Dataset(Y, Z, W, seed)


def loglik(spec: ModelSpec, data: Dataset) -> float:
    """Sum over replicates of the ``N(0, Var(Y, Z))`` log-density."""
    C = observed_moments(spec, data.W).joint_covariance()
    try:
        cf = linalg.cho_factor(C, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefinite("observed (Y, Z) covariance is not positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    quad = float(np.trace(linalg.cho_solve(cf, data.scatter)))
    m = C.shape[0]
    return -0.5 * data.r * (m * LOG2PI + logdet) - 0.5 * quad


# ---------------------------------------------------------------------------
# parameter transforms

_BOUNDS = {"log": (-12.0, 12.0), "atanh": (-6.0, 6.0), "logit": (-12.0, 12.0), "id": (-50.0, 50.0)}


def _fwd(kind: str, v: float) -> float:
    if kind == "log":
        return math.log(v)
    if kind == "atanh":
        return math.atanh(min(max(v, -1 + 1e-12), 1 - 1e-12))
    if kind == "logit":
        v = min(max(v, 1e-6), 1 - 1e-6)
        return math.log(v / (1 - v))
    return float(v)


def _inv(kind: str, x: float) -> float:
    if kind == "log":
        return math.exp(x)
    if kind == "atanh":
        return math.tanh(x)
    if kind == "logit":
        return 1.0 / (1.0 + math.exp(-x))
    return float(x)


def _kinds(template: ModelSpec) -> list[tuple[str, str]]:
    """(name, transform) for every free scalar of the family."""
    if isinstance(template, CarSPParams):
        return [("tau_u", "log"), ("tau_z", "log"), ("phi_u", "atanh"), ("phi_z", "atanh"),
                ("rho", "atanh"), ("sigma2_eps", "log"), ("beta", "id")]
    if isinstance(template, LerouxParams):
        out = [("sigma_u", "log"), ("sigma_z", "log"), ("lambda_u", "logit"), ("lambda_z", "logit"),
               ("rho", "atanh"), ("sigma2_eps", "log"), ("beta", "id")]
        if not template.parsimonious:
            out.append(("lambda_uz", "logit"))
        return out
    if isinstance(template, LmcParams):
        T = template.T
        return ([(f"a[{t}]", "id") for t in range(T)] + [(f"b[{t}]", "id") for t in range(T)]
                + [(f"phi[{t}]", "log") for t in range(T)] + [("sigma2_eps", "log"), ("beta", "id")])
    if isinstance(template, BivariateParams):
        return [("sigma_u", "log"), ("sigma_z", "log"), ("psi_u", "log"), ("psi_z", "log"),
                ("psi_uz", "log"), ("rho", "atanh"), ("sigma2_eps", "log"), ("beta", "id")]
    if isinstance(template, ParsMaternParams):
        return [("sigma_u", "log"), ("sigma_z", "log"), ("phi", "log"), ("nu_u", "log"),
                ("nu_z", "log"), ("rho", "atanh"), ("sigma2_eps", "log"), ("beta", "id")]
    raise DomainError(f"unsupported model spec {type(template).__name__}")


def spec_values(spec: ModelSpec) -> dict[str, float]:
    """Flat name -> value map matching :func:`_kinds` naming."""
    out = {}
    for f in fields(spec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            for t, x in enumerate(v):
                out[f"{f.name}[{t}]"] = float(x)
        elif isinstance(v, (int, float)) and v is not None:
            out[f.name] = float(v)
    return out


def _build(template: ModelSpec, values: dict[str, float]) -> ModelSpec:
    changes, vec = {}, {}
    for k, v in values.items():
        if "[" in k:
            name, idx = k[:-1].split("[")
            vec.setdefault(name, {})[int(idx)] = v
        else:
            changes[k] = v
    for name, d in vec.items():
        cur = list(getattr(template, name))
        for i, v in d.items():
            cur[i] = v
        changes[name] = tuple(cur)
    return template.replace(**changes)


@dataclass(frozen=True)
class Parameterization:
    """Map between a model family and an unconstrained optimisation vector."""

    template: ModelSpec
    fixed: tuple = ()

    def __post_init__(self):
        names = [n for n, _ in _kinds(self.template)]
        fixed = dict(self.fixed)
        unknown = set(fixed) - set(names)
        if unknown:
            raise DomainError(f"cannot fix unknown parameters {sorted(unknown)}")
        object.__setattr__(self, "fixed", tuple(sorted(fixed.items())))

    @property
    def free(self) -> list[tuple[str, str]]:
        fixed = dict(self.fixed)
        return [(n, k) for n, k in _kinds(self.template) if n not in fixed]

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.free]

    def bounds(self) -> list[tuple[float, float]]:
        return [_BOUNDS[k] for _, k in self.free]

    def to_vector(self, spec: ModelSpec) -> np.ndarray:
        vals = spec_values(spec)
        lo_hi = self.bounds()
        x = np.array([_fwd(k, vals[n]) for n, k in self.free])
        return np.clip(x, [b[0] for b in lo_hi], [b[1] for b in lo_hi])

    def to_spec(self, x) -> ModelSpec:
        vals = {n: _inv(k, float(v)) for (n, k), v in zip(self.free, x)}
        vals.update(dict(self.fixed))
        return _build(self.template, vals)

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        x = []
        for name, kind in self.free:
            if kind == "log":
                x.append(rng.uniform(-1.0, 1.0))
            elif kind == "atanh":
                x.append(math.atanh(rng.uniform(-0.8, 0.8)))
            elif kind == "logit":
                x.append(_fwd("logit", rng.uniform(0.1, 0.9)))
            elif name == "beta":
                x.append(rng.uniform(-5.0, 5.0))
            else:
                x.append(rng.uniform(-2.0, 2.0))
        x = np.array(x)
        if isinstance(self.template, LmcParams):
            # read the draws for b_t as loadings c_t = beta a_t + b_t of Y, so that
            # a wide spread of beta does not imply wildly scaled starting covariances
            names = self.names
            if "beta" in names:
                beta = x[names.index("beta")]
            else:
                beta = dict(self.fixed)["beta"]
            for t in range(self.template.T):
                if f"b[{t}]" in names:
                    a = x[names.index(f"a[{t}]")] if f"a[{t}]" in names else dict(self.fixed)[f"a[{t}]"]
                    x[names.index(f"b[{t}]")] -= beta * a
        return x


def _objective(param: Parameterization, data: Dataset):
    def f(x):
        try:
            val = -loglik(param.to_spec(x), data)
        except (NotPositiveDefinite, DomainError, OverflowError, ValueError, ZeroDivisionError):
            return PENALTY
        return val if math.isfinite(val) else PENALTY
    return f


def central_gradient(f, x, rel_step: float = 1e-6):
    """Central differences with step ``rel_step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_hessian(f, x, rel_step: float = 1e-4):
    x = np.asarray(x, dtype=float)
    k = x.size
    H = np.empty((k, k))
    hs = [rel_step * max(1.0, abs(v)) for v in x]
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = hs[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / hs[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = hs[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * hs[i] * hs[j])
    return H


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class StartResult:
    index: int
    x: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    message: str


@dataclass(frozen=True)
class FitResult:
    family: str
    estimates: dict
    loglik: float
    converged: bool
    n_starts: int
    start_dispersion: float
    spec: ModelSpec
    starts: tuple = ()

    @property
    def beta_hats(self) -> np.ndarray:
        return np.array([s["beta"] for s in self.starts if s["converged"]])

    @property
    def loglik_spread(self) -> float:
        ll = [s["loglik"] for s in self.starts if s["converged"]]
        return float(max(ll) - min(ll)) if ll else float("nan")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "estimates": self.estimates,
            "loglik": self.loglik,
            "converged": self.converged,
            "n_starts": self.n_starts,
            "start_dispersion": self.start_dispersion,
            "loglik_spread": self.loglik_spread,
            "spec": self.spec.to_dict(),
            "starts": list(self.starts),
        }


def _run_start(param: Parameterization, data: Dataset, x0, index: int,
               gtol: float, maxiter: int) -> StartResult:
    f = _objective(param, data)
    try:
        res = optimize.minimize(
            f, x0, jac=lambda x: central_gradient(f, x), method="L-BFGS-B",
            bounds=param.bounds(), options={"gtol": gtol, "maxiter": maxiter, "ftol": 1e-14},
        )
    except (ValueError, FloatingPointError) as exc:
        return StartResult(index, np.asarray(x0), float("-inf"), False, 0, str(exc))
    ll = -float(res.fun)
    ok = bool(res.success) and res.fun < PENALTY
    if res.fun >= PENALTY:
        ll = float("-inf")
    message = str(res.message)
    # The boxes only keep the transformed coordinates finite. A start that
    # stops on one has not found a stationary point of the likelihood.
    lo, hi = np.array(param.bounds()).T
    if ok and np.any(np.minimum(res.x - lo, hi - res.x) <= 1e-6 * (hi - lo)):
        ok = False
        message = "stopped on a parameter box bound; " + message
    return StartResult(index, np.asarray(res.x), ll, ok, int(res.nit), message)


def _start_points(param: Parameterization, data: Dataset, n_starts: int, seed: int,
                  initial=None, max_draws: int = 200) -> list[np.ndarray]:
    """Seeded start vectors; random draws landing outside the valid region are redrawn."""
    f = _objective(param, data)
    pts = []
    for i in range(n_starts):
        if i == 0 and initial is not None:
            pts.append(param.to_vector(initial))
            continue
        rng = np.random.default_rng([seed, i])
        for _ in range(max_draws):
            x = param.random_start(rng)
            if f(x) < PENALTY:
                break
        pts.append(x)
    return pts


def fit_mle(template: ModelSpec, data: Dataset, n_starts: int = 8, seed: int = 0,
            fixed: dict | None = None, initial: ModelSpec | None = None,
            gtol: float = 1e-6, maxiter: int = 500, threads: int | None = None) -> FitResult:
    """Multi-start maximum likelihood over the family of ``template``.

    ``template`` fixes the family and any structural choices (covariance
    family, number of latent processes, parsimonious or not); its numeric
    values are only used for parameters listed in ``fixed`` (by name) and
    as the first start when ``initial`` is given. Start ``i`` draws from
    ``numpy.random.default_rng([seed, i])`` so results do not depend on
    thread scheduling.
    """
    if n_starts < 1:
        raise DomainError("n_starts must be at least 1")
    fixed = dict(fixed or {})
    param = Parameterization(template, tuple(fixed.items()))
    points = _start_points(param, data, n_starts, seed, initial)
    workers = min(n_starts, threads or max_threads())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda a: _run_start(param, data, a[1], a[0], gtol, maxiter),
                                  enumerate(points)))
    else:
        results = [_run_start(param, data, x0, i, gtol, maxiter) for i, x0 in enumerate(points)]
    results.sort(key=lambda s: s.index)
    finite = [s for s in results if math.isfinite(s.loglik)]
    if not finite:
        raise AllStartsFailed(f"all {n_starts} starts failed: {results[0].message}")
    conv = [s for s in finite if s.converged]
    pool = conv or finite
    best = max(pool, key=lambda s: (s.loglik, -s.index))
    spec = param.to_spec(best.x)
    starts = []
    for s in results:
        entry = {"index": s.index, "loglik": s.loglik, "converged": s.converged,
                 "iterations": s.iterations, "message": s.message}
        entry["beta"] = spec_values(param.to_spec(s.x))["beta"] if math.isfinite(s.loglik) else None
        starts.append(entry)
    bh = [s["beta"] for s in starts if s["converged"]]
    disp = float(max(bh) - min(bh)) if bh else float("nan")
    return FitResult(
        family=template.FAMILY,
        estimates=spec_values(spec),
        loglik=best.loglik,
        converged=bool(conv),
        n_starts=n_starts,
        start_dispersion=disp,
        spec=spec,
        starts=tuple(starts),
    )


def standard_errors(spec: ModelSpec, data: Dataset, fixed: dict | None = None) -> dict[str, float]:
    """Observed-information standard errors in transformed coordinates.

    ``beta`` and the LMC loadings use the identity transform, so their
    entries are on the natural scale.
    """
    param = Parameterization(spec, tuple((fixed or {}).items()))
    f = _objective(param, data)
    x = param.to_vector(spec)
    H = central_hessian(f, x)
    cov = np.linalg.pinv(0.5 * (H + H.T))
    return {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(param.names)}


# ---------------------------------------------------------------------------
# profile likelihood


@dataclass(frozen=True)
class ProfilePoint:
    beta: float
    loglik: float
    converged: bool
    estimates: dict


def profile_beta(template: ModelSpec, data: Dataset, beta_grid, n_starts: int = 4, seed: int = 0,
                 initial: ModelSpec | None = None, gtol: float = 1e-6, maxiter: int = 500,
                 threads: int | None = None) -> list[ProfilePoint]:
    """Maximum log-likelihood over the nuisance parameters at each grid value of ``beta``.

    Every grid point runs ``n_starts`` starts seeded with ``(seed + k, i)``
    for grid index ``k``. From the second point on (or from the first when
    ``initial`` is given), start 0 is the previous optimum moved to the new
    ``beta``. Random starts stay in the mix because a warm start taken from a
    boundary optimum can stall short of the maximum. A failed grid point is
    reported with ``converged=False`` and ``loglik=-inf`` rather than
    aborting the sweep.
    """
    grid = [float(b) for b in np.atleast_1d(beta_grid)]
    if not grid:
        raise DomainError("beta grid is empty")
    out = []
    prev = initial
    for k, b in enumerate(grid):
        try:
            start = None if prev is None else prev.replace(beta=b)
            fit = fit_mle(template, data, n_starts=n_starts, seed=seed + k, fixed={"beta": b},
                          initial=start, gtol=gtol, maxiter=maxiter, threads=threads)
        except AllStartsFailed as exc:
            log.warning("profile point beta=%g failed: %s", b, exc)
            out.append(ProfilePoint(b, float("-inf"), False, {}))
            continue
        prev = fit.spec
        out.append(ProfilePoint(b, fit.loglik, fit.converged, fit.estimates))
    return out


__all__ = [
    "Dataset", "FitResult", "Parameterization", "ProfilePoint", "central_gradient",
    "central_hessian", "fit_mle", "loglik", "max_threads", "profile_beta", "sample",
    "spec_values", "standard_errors",
]
