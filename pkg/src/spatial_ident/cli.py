"""Command-line interface: ``spatial-ident <command> [options]``.

Exit status is 0 on success, 1 for invalid input (bad arguments, unreadable
or malformed files, inapplicable constructions) and 2 when a computation
fails (loss of positive definiteness, optimiser failure, empty search).
Errors are reported on stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    AllStartsFailed,
    CaseNotApplicable,
    ConvergenceFailure,
    DomainError,
    DuplicateParameter,
    GraphError,
    InvalidRegion,
    NoValidBetaFound,
    NotPositiveDefinite,
    ZeroDegree,
)
from .forge import CONSTRUCTIONS, forge
from .graph import (
    DEFAULT_EIG_TOL,
    connected_components,
    count_distinct,
    degree_matrix,
    figure1_graphs,
    laplacian_spectrum,
    load_graph,
    normalized_spectrum,
)
from .identify import Tolerances, car_component_summary, check
from .io import (
    atomic_write_text,
    dumps_json,
    load_dataset,
    load_spec,
    rows_to_csv,
    save_dataset,
    write_json,
)
from .mc import fit_mle, profile_beta, sample
from .models import CarSPParams
from .specfun import CovFamily, FAMILY_KINDS, cov_eval

log = logging.getLogger("spatial_ident")

VALIDATION_ERRORS = (GraphError, DomainError, DuplicateParameter, CaseNotApplicable, ZeroDegree,
                     FileNotFoundError, IsADirectoryError, KeyError, ValueError)
COMPUTATION_ERRORS = (NotPositiveDefinite, InvalidRegion, NoValidBetaFound, ConvergenceFailure,
                      AllStartsFailed, np.linalg.LinAlgError, ArithmeticError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed inputs for one command; every file is loaded before work starts."""

    command: str
    model: object = None
    graph: object = None
    graph_path: str | None = None
    data: object = None
    out: Path | None = None
    options: dict = field(default_factory=dict)


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise DomainError(f"grid must look like lo:hi:steps, got {text!r}") from None
    if steps < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError(f"bad grid {text!r}")
    return np.linspace(lo, hi, steps)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"expected comma-separated numbers, got {text!r}") from None


def _tolerances(args) -> Tolerances:
    kw = {}
    if getattr(args, "tol_eig", None) is not None:
        kw["eig_rel"] = args.tol_eig
    if getattr(args, "tol_param", None) is not None:
        kw["param_rel"] = args.tol_param
    if getattr(args, "large_distance_factor", None) is not None:
        kw["large_distance_factor"] = args.large_distance_factor
    return Tolerances(**kw)


def _emit(obj, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(dumps_json(obj))
    else:
        write_json(out, obj)


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: ScenarioConfig) -> int:
    rep = check(cfg.model, cfg.graph, cfg.options["tol"], known_smoothness=cfg.options["known_smoothness"])
    if cfg.options["table"]:
        print(rep.format_table())
        if cfg.out is not None:
            write_json(cfg.out, rep.to_dict())
    else:
        _emit(rep.to_dict(), cfg.out)
    return 0


def cmd_forge(cfg: ScenarioConfig) -> int:
    cert = forge(cfg.model, cfg.graph, cfg.options["construction"], **cfg.options["settings"])
    _emit(cert.to_dict(), cfg.out)
    return 0


def cmd_simulate(cfg: ScenarioConfig) -> int:
    data = sample(cfg.model, cfg.graph, cfg.options["replicates"], cfg.options["seed"])
    out = cfg.out or Path("dataset")
    save_dataset(data, out, cfg.graph_path)
    print(dumps_json({"dataset": str(out), "replicates": data.r, "locations": data.n, "seed": data.seed}), end="")
    return 0


def cmd_fit(cfg: ScenarioConfig) -> int:
    res = fit_mle(cfg.model, cfg.data, n_starts=cfg.options["starts"], seed=cfg.options["seed"])
    _emit(res.to_dict(), cfg.out)
    return 0


def cmd_profile(cfg: ScenarioConfig) -> int:
    pts = profile_beta(cfg.model, cfg.data, cfg.options["grid"], n_starts=cfg.options["starts"],
                       seed=cfg.options["seed"])
    rows = [(p.beta, p.loglik, p.converged) for p in pts]
    payload = {"family": cfg.model.FAMILY,
               "points": [{"beta": p.beta, "loglik": p.loglik, "converged": p.converged,
                           "estimates": p.estimates} for p in pts]}
    out = cfg.out
    if out is None:
        sys.stdout.write(dumps_json(payload))
    else:
        write_json(out / "profile.json", payload)
        atomic_write_text(out / "profile.csv", rows_to_csv(("beta", "loglik", "converged"), rows))
    return 0


def cmd_specfun(cfg: ScenarioConfig) -> int:
    o = cfg.options
    fam = o["family"]
    psis, w = o["psi"], o["w"]
    rows = []
    for wi in w:
        rows.append([float(wi)] + [float(cov_eval(fam, psi, float(wi))) for psi in psis])
    header = ["w"] + [f"psi={psi:g}" for psi in psis]
    text = rows_to_csv(header, rows)
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(cfg.out, text)
    return 0


def graph_summary(W, eig_tol: float = DEFAULT_EIG_TOL) -> dict:
    comps = connected_components(W)
    d = degree_matrix(W).diag
    lap = laplacian_spectrum(W).eigenvalues
    info = {
        "n": W.n,
        "binary": W.is_binary,
        "components": comps.blocks,
        "degrees": d.tolist(),
        "laplacian_eigenvalues": lap.tolist(),
        "laplacian_distinct": count_distinct(lap, eig_tol),
        "component_summary": None,
        "normalized_eigenvalues": None,
    }
    if np.all(d > 0):
        info["normalized_eigenvalues"] = normalized_spectrum(W).eigenvalues.tolist()
        info["component_summary"] = car_component_summary(W, Tolerances(eig_rel=eig_tol))
    return info


def cmd_graph_info(cfg: ScenarioConfig) -> int:
    _emit(graph_summary(cfg.graph, cfg.options["tol"].eig_rel), cfg.out)
    return 0


DEMO_SPEC = CarSPParams(tau_u=1.0, tau_z=1.0, phi_u=0.3, phi_z=0.5, rho=0.4, sigma2_eps=0.5, beta=1.0)


def figure1_table(spec: CarSPParams = DEMO_SPEC) -> list[dict]:
    """Component condition and checker verdict for the four six-node example graphs."""
    rows = []
    for name, W in figure1_graphs().items():
        rep = check(spec, W)
        cond = next(c for c in rep.conditions if c.name == "component with a non-adjacent pair")
        rows.append({
            "graph": name,
            "components": len(connected_components(W)),
            "edges": int(np.count_nonzero(W.off_diagonal_values())),
            "nonadjacent_pair": cond.passed,
            "condition": "satisfied" if cond.passed else "violated",
            "verdict": rep.verdict.value,
            "construction": rep.construction or "",
        })
    return rows


def cmd_demo(cfg: ScenarioConfig) -> int:
    rows = figure1_table()
    header = list(rows[0])
    text = rows_to_csv(header, [[r[h] for h in header] for r in rows])
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(cfg.out / "figure1.csv", text)
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "check": cmd_check,
    "forge": cmd_forge,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "specfun": cmd_specfun,
    "graph-info": cmd_graph_info,
    "demo": cmd_demo,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spatial-ident", description="Identifiability checks and certificates for spatial confounding models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def common(sp, model=True, graph=True):
        if model:
            sp.add_argument("--model", required=True, help="model spec JSON")
        if graph:
            sp.add_argument("--graph", required=graph == "required", help="proximity/distance matrix (.csv dense or edge list)")
        sp.add_argument("--out", help="output path (stdout when omitted)")

    sp = sub.add_parser("check", help="evaluate identifiability conditions")
    common(sp, graph="required")
    sp.add_argument("--tol-eig", type=float, help=f"relative eigenvalue distinctness tolerance (default {DEFAULT_EIG_TOL:g})")
    sp.add_argument("--tol-param", type=float, help="relative parameter inequality tolerance (default 1e-8)")
    sp.add_argument("--large-distance-factor", type=float, help="threshold factor for the asymptotic Matern check (default 50)")
    sp.add_argument("--unknown-smoothness", action="store_true", help="Matern: smoothness not known, use the asymptotic check")
    sp.add_argument("--table", action="store_true", help="print a human-readable table instead of JSON")

    sp = sub.add_parser("forge", help="build an observationally equivalent alternative")
    common(sp, graph="required")
    sp.add_argument("--construction", choices=sorted(CONSTRUCTIONS), help="default: the one the checker cites")
    sp.add_argument("--delta", type=float, help="car_phi0: tau_z scale; lmc: beta shift")
    sp.add_argument("--zeta", type=int, choices=(-1, 1), help="car_phi0 sign")
    sp.add_argument("--b", type=float, help="car_fullyconnected index")
    sp.add_argument("--case", type=int, choices=(1, 2, 3), help="leroux_rho0 case")
    sp.add_argument("--rho-tilde", type=float, help="alternative correlation for Leroux constructions")
    sp.add_argument("--sigma-u-tilde", type=float, help="alternative confounder scale where free")
    sp.add_argument("--beta-tilde", type=float, help="bivariate_rho0 alternative treatment effect")

    sp = sub.add_parser("simulate", help="draw replicated datasets")
    common(sp, graph="required")
    sp.add_argument("--replicates", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)

    for name, helptext in (("fit", "multi-start maximum likelihood"), ("profile", "profile likelihood over beta")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--data", required=True, help="dataset directory or dataset.json")
        sp.add_argument("--starts", type=int, default=8)
        sp.add_argument("--seed", type=int, default=0)
        if name == "profile":
            sp.add_argument("--beta-grid", required=True, help="lo:hi:steps")

    sp = sub.add_parser("specfun", help="tabulate covariance functions")
    sp.add_argument("action", choices=("probe",))
    sp.add_argument("--family", required=True, choices=FAMILY_KINDS)
    sp.add_argument("--psi", required=True, help="comma-separated range parameters")
    sp.add_argument("--w", default="0:5:51", help="distance grid lo:hi:steps")
    sp.add_argument("--nu", type=float, help="Matern smoothness")
    sp.add_argument("--exponent", type=float, help="powered exponential exponent")
    sp.add_argument("--out")

    sp = sub.add_parser("graph-info", help="components, degrees and spectra of a graph")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--tol-eig", type=float)
    sp.add_argument("--out")

    sp = sub.add_parser("demo", help="four-graph CAR comparison table (CSV)")
    sp.add_argument("--out", help="directory for figure1.csv")
    return p


def load_config(args) -> ScenarioConfig:
    cmd = args.command
    out = Path(args.out) if getattr(args, "out", None) else None
    model = load_spec(args.model) if getattr(args, "model", None) else None
    graph_path = getattr(args, "graph", None)
    graph = load_graph(graph_path) if graph_path else None
    opts: dict = {}
    data = None
    if cmd in ("check", "graph-info"):
        opts["tol"] = _tolerances(args)
    if cmd == "check":
        opts["known_smoothness"] = not args.unknown_smoothness
        opts["table"] = args.table
    if cmd == "forge":
        opts["construction"] = args.construction
        settings = {
            "delta": args.delta, "zeta": args.zeta, "b": args.b, "case": args.case,
            "rho_tilde": args.rho_tilde, "sigma_u_tilde": args.sigma_u_tilde, "beta_tilde": args.beta_tilde,
        }
        opts["settings"] = {k: v for k, v in settings.items() if v is not None}
    if cmd == "simulate":
        if args.replicates < 1:
            raise DomainError("--replicates must be positive")
        opts.update(replicates=args.replicates, seed=args.seed)
    if cmd in ("fit", "profile"):
        if args.starts < 1:
            raise DomainError("--starts must be positive")
        data = load_dataset(args.data, graph=graph_path)
        graph = data.W
        opts.update(starts=args.starts, seed=args.seed)
        if cmd == "profile":
            opts["grid"] = _grid(args.beta_grid)
    if cmd == "specfun":
        kind = args.family
        if kind == "matern":
            if args.nu is None:
                raise DomainError("--nu is required for the matern family")
            fam = CovFamily.matern(args.nu)
        elif kind == "powered_exponential":
            if args.exponent is None:
                raise DomainError("--exponent is required for the powered_exponential family")
            fam = CovFamily.powered_exponential(args.exponent)
        else:
            fam = CovFamily(kind)
        opts.update(family=fam, psi=_floats(args.psi), w=_grid(args.w))
    return ScenarioConfig(cmd, model, graph, graph_path, data, out, opts)


def _error(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error("usage", exc, 1)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except COMPUTATION_ERRORS as exc:
        return _error("computation", exc, 2)
    except (VALIDATION_ERRORS + (OSError,)) as exc:
        return _error("validation", exc, 1)
    try:
        return COMMANDS[cfg.command](cfg)
    except COMPUTATION_ERRORS as exc:
        return _error("computation", exc, 2)
    except VALIDATION_ERRORS as exc:
        return _error("validation", exc, 1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
