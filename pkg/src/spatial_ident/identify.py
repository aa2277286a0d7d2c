"""Mechanical checks of the sufficient identifiability conditions.

Each ``check_*`` function evaluates the hypotheses of one theorem on a
concrete parameter set and location set, and returns an
:class:`IdentifiabilityReport` listing every condition with the measured
quantity and the tolerance used. Three verdicts are possible:

``IdentifiableUnderTheorem``
    every listed condition holds;
``ProvablyNonIdentifiable``
    a closed-form alternative parameterisation in :mod:`spatial_ident.forge`
    applies (its name is recorded in ``construction``);
``NotCovered``
    the theorems are silent.

The theorems are stated for exact values. Parameter-nonzero tests use an
absolute tolerance, parameter inequalities a relative one, and eigenvalue
distinctness the clustering rule of :func:`spatial_ident.graph.count_distinct`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .graph import (
    DEFAULT_EIG_TOL,
    as_proximity,
    connected_components,
    count_distinct,
    degree_matrix,
    is_fully_connected,
    laplacian_spectrum,
    normalized_spectrum,
)
from .models import (
    BivariateParams,
    CarSPParams,
    LerouxParams,
    LmcParams,
    ModelSpec,
    ParsMaternParams,
    bivariate_joint_moments,
)
from .specfun import MONOTONE_POWER_FAMILIES, k_linear_independence


class Theorem(str, enum.Enum):
    T1 = "T1"
    C1 = "C1"
    T2i = "T2i"
    T2ii = "T2ii"
    T3i = "T3i"
    T3ii = "T3ii"
    T4 = "T4"
    T5 = "T5"
    T6 = "T6"
    TA_KnownSmoothness = "TA_KnownSmoothness"


class Verdict(str, enum.Enum):
    IdentifiableUnderTheorem = "IdentifiableUnderTheorem"
    NotCovered = "NotCovered"
    ProvablyNonIdentifiable = "ProvablyNonIdentifiable"


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used when evaluating exact conditions."""

    param_abs: float = 1e-10
    param_rel: float = 1e-8
    eig_rel: float = DEFAULT_EIG_TOL
    rank_rel: float = 1e-10
    scaled_identity_rel: float = 1e-8
    large_distance_factor: float = 50.0
    random_triples: int = 8
    seed: int = 0


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Condition:
    name: str
    required: str
    measured: object
    passed: bool
    tolerance: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "required": self.required,
            "measured": _jsonable(self.measured),
            "pass": self.passed,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class IdentifiabilityReport:
    theorem: Theorem
    conditions: tuple
    verdict: Verdict
    construction: str | None = None
    all_parameters: bool | None = None
    heuristic: bool = False
    notes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "notes", tuple(self.notes))
        all_pass = all(c.passed for c in self.conditions)
        if (self.verdict is Verdict.IdentifiableUnderTheorem) != all_pass:
            raise AssertionError("verdict must be IdentifiableUnderTheorem exactly when all conditions pass")
        if (self.verdict is Verdict.ProvablyNonIdentifiable) != (self.construction is not None):
            raise AssertionError("non-identifiability must cite a construction")

    @property
    def identifiable(self) -> bool:
        return self.verdict is Verdict.IdentifiableUnderTheorem

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem.value,
            "verdict": self.verdict.value,
            "construction": self.construction,
            "all_parameters": self.all_parameters,
            "heuristic": self.heuristic,
            "conditions": [c.to_dict() for c in self.conditions],
            "notes": list(self.notes),
        }

    def format_table(self) -> str:
        rows = [("condition", "required", "measured", "pass")]
        for c in self.conditions:
            rows.append((c.name, c.required, _short(c.measured), "yes" if c.passed else "no"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [f"theorem {self.theorem.value}: {self.verdict.value}"]
        if self.construction:
            lines[0] += f" (construction: {self.construction})"
        if self.heuristic:
            lines[0] += " [heuristic]"
        for r in rows:
            lines.append("  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip())
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _short(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(_jsonable(x))


# ---------------------------------------------------------------------------
# scalar condition helpers


def _nonzero(name: str, value: float, tol: Tolerances) -> Condition:
    return Condition(name, f"|{name}| > {tol.param_abs:g}", float(value), abs(value) > tol.param_abs, tol.param_abs)


def _is_zero(x: float, tol: Tolerances) -> bool:
    return abs(x) <= tol.param_abs


def _differ(a_name: str, a: float, b_name: str, b: float, tol: Tolerances) -> Condition:
    gap = abs(a - b)
    thr = tol.param_rel * max(1.0, abs(a), abs(b))
    return Condition(f"{a_name} != {b_name}", f"|{a_name} - {b_name}| > {thr:.3g}", gap, gap > thr, tol.param_rel)


def _equal(a: float, b: float, tol: Tolerances) -> bool:
    return abs(a - b) <= tol.param_rel * max(1.0, abs(a), abs(b))


def scaled_identity_diagnostic(M, rel_tol: float = 1e-8) -> dict:
    """Whether ``M`` equals ``scale * I`` with ``scale = trace(M) / n``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("scaled_identity_diagnostic needs a square matrix")
    n = M.shape[0]
    scale = float(np.trace(M) / n)
    max_dev = float(np.max(np.abs(M - scale * np.eye(n))))
    return {
        "is_scaled_identity": max_dev <= rel_tol * (1.0 + abs(scale)),
        "scale": scale,
        "max_dev": max_dev,
    }


# ---------------------------------------------------------------------------
# CAR


def car_component_summary(W, tol: Tolerances = DEFAULT_TOL) -> list[dict]:
    """Per-component eigenvalue counts of ``W_[b]``, degree spread and adjacency gaps."""
    W = as_proximity(W)
    d = degree_matrix(W).diag
    out = []
    for block in connected_components(W).blocks:
        idx = np.asarray(block)
        sub = W.entries[np.ix_(idx, idx)]
        eig = np.linalg.eigvalsh(sub)
        off = sub[~np.eye(len(idx), dtype=bool)]
        out.append({
            "nodes": [int(i) for i in idx],
            "distinct_eigenvalues": count_distinct(eig, tol.eig_rel),
            "distinct_degrees": count_distinct(d[idx], tol.eig_rel),
            "has_nonadjacent_pair": bool(np.any(off == 0.0)),
        })
    return out


def check_car(p: CarSPParams, W, tol: Tolerances = DEFAULT_TOL) -> IdentifiabilityReport:
    """General eigenvalue condition for weighted ``W``; the component condition when ``W`` is 0/1."""
    W = as_proximity(W)
    normalized_spectrum(W)  # raises ZeroDegree for isolated locations
    comps = car_component_summary(W, tol)
    conds = [_nonzero("phi_u", p.phi_u, tol)]
    if W.is_binary:
        theorem = Theorem.C1
        ok = [c["has_nonadjacent_pair"] for c in comps]
        conds.append(Condition(
            "component with a non-adjacent pair",
            "some component b has i, j with W_ij = 0",
            [int(x) for x in ok], any(ok),
        ))
    else:
        theorem = Theorem.T1
        ok = [c["distinct_eigenvalues"] >= 3 or c["distinct_degrees"] >= 2 for c in comps]
        conds.append(Condition(
            "component spectral richness",
            ">= 3 distinct eigenvalues of W_[b] or distinct degrees in D_[b]",
            [(c["distinct_eigenvalues"], c["distinct_degrees"]) for c in comps],
            any(ok), tol.eig_rel,
        ))
    notes = [f"{len(comps)} connected component(s)"]
    if all(c.passed for c in conds):
        return IdentifiabilityReport(theorem, conds, Verdict.IdentifiableUnderTheorem,
                                     all_parameters=True, notes=notes)
    if _is_zero(p.phi_u, tol):
        return IdentifiabilityReport(theorem, conds, Verdict.ProvablyNonIdentifiable,
                                     construction="car_phi0", notes=notes)
    if is_fully_connected(W) and not _is_zero(p.rho, tol):
        notes.append("fully connected binary neighbourhood structure")
        return IdentifiabilityReport(theorem, conds, Verdict.ProvablyNonIdentifiable,
                                     construction="car_fullyconnected", notes=notes)
    return IdentifiabilityReport(theorem, conds, Verdict.NotCovered, notes=notes)


# ---------------------------------------------------------------------------
# Leroux


def check_leroux(p: LerouxParams, W, tol: Tolerances = DEFAULT_TOL) -> IdentifiabilityReport:
    omega = laplacian_spectrum(W).eigenvalues
    k = count_distinct(omega, tol.eig_rel)
    notes = [f"D - W has {k} distinct eigenvalue(s)"]
    rho0 = _is_zero(p.rho, tol)
    lu0 = _is_zero(p.lambda_u, tol)
    lz0 = _is_zero(p.lambda_z, tol)
    same_uz = _equal(p.lambda_u, p.lambda_z, tol)

    def eig_cond(m):
        return Condition(f">= {m} distinct eigenvalues of D - W", f"count >= {m}", k, k >= m, tol.eig_rel)

    if not p.parsimonious:
        if not rho0:
            conds = [
                _nonzero("rho", p.rho, tol),
                _differ("lambda_uz", p.lambda_uz, "lambda_z", p.lambda_z, tol),
                eig_cond(3),
            ]
            if all(c.passed for c in conds):
                if lu0:
                    notes.append("lambda_u = 0: beta is identified, the remaining parameters are not covered")
                return IdentifiabilityReport(Theorem.T2i, conds, Verdict.IdentifiableUnderTheorem,
                                             all_parameters=not lu0, notes=notes)
            if _equal(p.lambda_uz, p.lambda_z, tol):
                return IdentifiabilityReport(Theorem.T2i, conds, Verdict.ProvablyNonIdentifiable,
                                             construction="leroux_equal_lambda", notes=notes)
            return IdentifiabilityReport(Theorem.T2i, conds, Verdict.NotCovered, notes=notes)
        conds = [
            Condition("rho = 0", f"|rho| <= {tol.param_abs:g}", float(p.rho), True, tol.param_abs),
            _differ("lambda_u", p.lambda_u, "lambda_z", p.lambda_z, tol),
            _nonzero("lambda_z", p.lambda_z, tol),
            _nonzero("lambda_u", p.lambda_u, tol),
            eig_cond(4),
        ]
        if all(c.passed for c in conds):
            return IdentifiabilityReport(Theorem.T2ii, conds, Verdict.IdentifiableUnderTheorem,
                                         all_parameters=True, notes=notes)
        if same_uz or lz0 or lu0:
            return IdentifiabilityReport(Theorem.T2ii, conds, Verdict.ProvablyNonIdentifiable,
                                         construction="leroux_rho0", notes=notes)
        return IdentifiabilityReport(Theorem.T2ii, conds, Verdict.NotCovered, notes=notes)

    if not rho0:
        conds = [
            _differ("lambda_u", p.lambda_u, "lambda_z", p.lambda_z, tol),
            _nonzero("rho", p.rho, tol),
            eig_cond(3),
        ]
        theorem = Theorem.T3i
    else:
        conds = [
            _differ("lambda_u", p.lambda_u, "lambda_z", p.lambda_z, tol),
            _nonzero("lambda_u", p.lambda_u, tol),
            eig_cond(3),
        ]
        theorem = Theorem.T3ii
    if all(c.passed for c in conds):
        return IdentifiabilityReport(theorem, conds, Verdict.IdentifiableUnderTheorem,
                                     all_parameters=not lu0, notes=notes)
    if same_uz or (rho0 and lu0):
        return IdentifiabilityReport(theorem, conds, Verdict.ProvablyNonIdentifiable,
                                     construction="leroux_pars", notes=notes)
    return IdentifiabilityReport(theorem, conds, Verdict.NotCovered, notes=notes)


# ---------------------------------------------------------------------------
# stationary bivariate and LMC


def three_linear_independence(family, psi_triple, W, tol: Tolerances = DEFAULT_TOL) -> dict:
    """3-linear independence of ``family`` on the off-diagonal values of ``W``.

    For exponential, Gaussian and powered-exponential families the property is
    exact once there are three distinct positive values. Other families are
    probed numerically on the given triple plus seeded random triples, which
    is evidence rather than proof.
    """
    off = as_proximity(W).off_diagonal_values()
    S = np.unique(off)
    pos = S[S > 0]
    if family.kind in MONOTONE_POWER_FAMILIES:
        return {"holds": pos.size >= 3, "method": "proposition", "distinct_positive": int(pos.size),
                "min_ratio": None}
    if S.size < 3:
        return {"holds": False, "method": "numerical", "distinct_positive": int(pos.size), "min_ratio": 0.0}
    rng = np.random.default_rng(tol.seed)
    lo, hi = np.log(max(pos.min(), 1e-12) / 10.0), np.log(pos.max() * 10.0)
    triples = []
    if len({float(x) for x in psi_triple}) == 3:
        triples.append(tuple(float(x) for x in psi_triple))
    for _ in range(tol.random_triples):
        triples.append(tuple(np.exp(rng.uniform(lo, hi, size=3))))
    ratios = [k_linear_independence(family, t, S, rank_tol=tol.rank_rel).ratio for t in triples]
    worst = float(min(ratios))
    return {"holds": worst > tol.rank_rel, "method": "numerical", "distinct_positive": int(pos.size),
            "min_ratio": worst}


def check_bivariate(p: BivariateParams | LmcParams, W, tol: Tolerances = DEFAULT_TOL) -> IdentifiabilityReport:
    if isinstance(p, LmcParams):
        conds = [Condition(
            "no loading shift preserving moments",
            "(beta, b_t) -> (beta - delta, b_t + delta a_t) changes the moments",
            "moments invariant for every delta", False,
        )]
        return IdentifiabilityReport(Theorem.T4, conds, Verdict.ProvablyNonIdentifiable,
                                     construction="lmc", notes=["every LMC specification is non-identifiable"])
    li = three_linear_independence(p.family, (p.psi_u, p.psi_z, p.psi_uz), W, tol)
    conds = [
        _nonzero("rho", p.rho, tol),
        _differ("psi_uz", p.psi_uz, "psi_z", p.psi_z, tol),
        Condition("3-linear independence on off-diagonal W",
                  "no nontrivial vanishing combination of three covariances",
                  li["distinct_positive"] if li["method"] == "proposition" else li["min_ratio"],
                  bool(li["holds"]), None if li["method"] == "proposition" else tol.rank_rel),
    ]
    heuristic = li["method"] == "numerical"
    notes = [f"linear independence via {li['method']}"]
    if all(c.passed for c in conds):
        return IdentifiabilityReport(Theorem.T5, conds, Verdict.IdentifiableUnderTheorem,
                                     all_parameters=True, heuristic=heuristic, notes=notes)
    if _equal(p.psi_u, p.psi_z, tol) and _equal(p.psi_uz, p.psi_z, tol):
        return IdentifiabilityReport(Theorem.T5, conds, Verdict.ProvablyNonIdentifiable,
                                     construction="bivariate_rho0", notes=notes)
    if _is_zero(p.rho, tol):
        notes.append("rho = 0: bivariate_rho0 construction applies once psi_u = psi_z = psi_uz")
    return IdentifiabilityReport(Theorem.T5, conds, Verdict.NotCovered, notes=notes)


# ---------------------------------------------------------------------------
# parsimonious Matern


def check_matern(p: ParsMaternParams, W, known_smoothness: bool = True,
                 tol: Tolerances = DEFAULT_TOL) -> IdentifiabilityReport:
    W = as_proximity(W)
    off = W.off_diagonal_values()
    nu_cond = _differ("nu_u", p.nu_u, "nu_z", p.nu_z, tol)
    notes = []
    if known_smoothness:
        coef = bivariate_joint_moments(p, W).coef
        diag = scaled_identity_diagnostic(coef, tol.scaled_identity_rel)
        conds = [
            nu_cond,
            Condition("positive distance", "some W_ij > 0", float(off.max(initial=0.0)), bool(np.any(off > 0))),
            Condition("coef not a scaled identity", f"max deviation > {tol.scaled_identity_rel:g}(1+|scale|)",
                      diag["max_dev"], not diag["is_scaled_identity"], tol.scaled_identity_rel),
        ]
        theorem, heuristic = Theorem.TA_KnownSmoothness, False
    else:
        maxw = float(off.max(initial=0.0))
        thr = tol.large_distance_factor * p.phi
        conds = [
            nu_cond,
            _nonzero("rho", p.rho, tol),
            Condition("large maximal distance", f"max W_ij >= {tol.large_distance_factor:g} phi",
                      maxw / p.phi, maxw >= thr, tol.large_distance_factor),
        ]
        theorem, heuristic = Theorem.T6, True
        notes.append("asymptotic theorem: the large-distance condition is a finite-sample proxy")
    if not nu_cond.passed:
        notes.append("nu_u = nu_z: the cross smoothness equals the marginal one")
    verdict = Verdict.IdentifiableUnderTheorem if all(c.passed for c in conds) else Verdict.NotCovered
    return IdentifiabilityReport(theorem, conds, verdict, all_parameters=verdict is Verdict.IdentifiableUnderTheorem,
                                 heuristic=heuristic, notes=notes)


# ---------------------------------------------------------------------------


def check(spec: ModelSpec, W, tol: Tolerances = DEFAULT_TOL, known_smoothness: bool = True) -> IdentifiabilityReport:
    """Dispatch to the checker matching the model family."""
    if isinstance(spec, CarSPParams):
        return check_car(spec, W, tol)
    if isinstance(spec, LerouxParams):
        return check_leroux(spec, W, tol)
    if isinstance(spec, (BivariateParams, LmcParams)):
        return check_bivariate(spec, W, tol)
    if isinstance(spec, ParsMaternParams):
        return check_matern(spec, W, known_smoothness, tol)
    raise DomainError(f"unsupported model spec {type(spec).__name__}")


__all__ = [
    "Condition", "IdentifiabilityReport", "Theorem", "Tolerances", "Verdict",
    "car_component_summary", "check", "check_bivariate", "check_car", "check_leroux",
    "check_matern", "scaled_identity_diagnostic", "three_linear_independence",
]
