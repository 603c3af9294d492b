"""
Command line
============

Runs one experiment per process and leaves a self-describing run directory:
``manifest.json`` (the RunConfig), JSON reports, CSV curves and ``run.log``.

Usage Examples:
---------------
carleman check-sequence gevrey:2 --K 256
carleman conjugate power:0.5 --matrix x=0.5,1,2 --biconjugate
carleman divide --f linear --j 2 --seq gevrey:2 --grid 128 --levels 4
carleman replay runs/divide/manifest.json

Exit codes: 0 success, 1 numerical limit reached, 2 invalid input or usage,
3 a measured bound or certificate failed.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from carleman import __version__
from carleman.config import NumericsConfig, RunConfig, get_settings
from carleman.cplane import dbar
from carleman.divide import chain_select, joris_divide
from carleman.errors import CarlemanError, InvalidInput, NumericalLimit, VerificationFailed
from carleman.functions import SmoothFn1D, function_from_builtin
from carleman.logging import get_run_logger, logger, release_run_logger
from carleman.models import CertificateBundle
from carleman.seqcore import (
    ClosednessResult,
    MGResult,
    QuasiResult,
    WeightMatrix,
    WeightSequence,
    is_derivation_closed,
    is_quasianalytic,
    is_regular,
    moderate_growth_constant,
    sequence_from_builtin,
)
from carleman.store import ArtifactStore, FileArtifactStore
from carleman.wfun import (
    WeightFunction,
    associated_matrix,
    biconjugate,
    mk_weight_function,
    young_conjugate,
)

EXIT_OK = 0
EXIT_LIMIT = 1
EXIT_INPUT = 2
EXIT_VIOLATION = 3

NUMERIC_FLAGS = ("K", "grid", "eps0", "levels", "tol")


class SequenceReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    label: str
    K: int
    kind: str
    certificates: CertificateBundle
    quasianalytic: QuasiResult
    derivation: ClosednessResult
    mg: MGResult
    regular: Optional[bool]
    regular_C: Optional[float] = None


class ConjugateReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    certificates: CertificateBundle
    conjugate_certificates: CertificateBundle
    unbounded: List[float]
    biconjugate_error: Optional[float] = None
    matrix_xs: List[float] = []
    order_slack: Optional[float] = None
    fctmod_slack: Optional[float] = None
    fctmod_pairs: List[Tuple[float, float]] = []


# ---------------------------------------------------------------------------
# input specs
# ---------------------------------------------------------------------------


def _load_sequence(spec: str, K: int) -> WeightSequence:
    if spec.endswith(".json"):
        return WeightSequence.from_json(Path(spec).read_text())
    return sequence_from_builtin(spec, K=K)


def _load_omega(spec: str, tol: float) -> WeightFunction:
    if spec.endswith(".json"):
        return WeightFunction.from_json(Path(spec).read_text())
    return mk_weight_function(spec, tol=tol)


def parse_xs(text: str) -> List[float]:
    """'x=0.5,1,2' or '0.5,1,2' -> [0.5, 1.0, 2.0]."""
    body = text.split("=", 1)[1] if "=" in text else text
    try:
        xs = [float(part) for part in body.split(",") if part.strip()]
    except ValueError:
        raise InvalidInput(f"matrix indices must be numbers, got {text!r}", text=text)
    if not xs:
        raise InvalidInput("matrix needs at least one index", text=text)
    return xs


def _flag(options: Dict[str, str], name: str) -> bool:
    return options.get(name, "false") == "true"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_check_sequence(cfg: RunConfig, store: ArtifactStore, log) -> Tuple[int, dict]:
    num = cfg.numerics
    M = _load_sequence(cfg.inputs["seq"], num.K)
    try:
        regular, regular_C = is_regular(M)
    except CarlemanError as e:
        log.warning("Regularity undecided", label=M.label, error=str(e))
        regular, regular_C = None, None
    report = SequenceReport(
        label=M.label,
        K=M.K,
        kind=M.kind,
        certificates=CertificateBundle(certificates=dict(M.certificates)),
        quasianalytic=is_quasianalytic(M),
        derivation=is_derivation_closed(M),
        mg=moderate_growth_constant(M, M),
        regular=regular,
        regular_C=regular_C,
    )
    store.write_model("report.json", report)
    k = np.arange(M.K + 1)
    store.write_csv(
        "sequence.csv",
        ["k", "logM", "logm", "logmu"],
        zip(k.tolist(), M.logM.tolist(), M.logm.tolist(), M.logmu.tolist()),
    )
    summary = {
        "label": M.label,
        "log_convex": M.certificates["log_convex"].passed,
        "quasianalytic": report.quasianalytic.quasianalytic,
        "non_quasianalytic": report.quasianalytic.quasianalytic is False,
        "mg": report.mg.value,
        "regular": regular,
    }
    log.info("Sequence checked", **summary)
    return EXIT_OK, summary


def cmd_conjugate(cfg: RunConfig, store: ArtifactStore, log) -> Tuple[int, dict]:
    num = cfg.numerics
    omega = _load_omega(cfg.inputs["omega"], num.tol)
    smax = float(cfg.options.get("smax", "64"))
    points = int(cfg.options.get("points", "257"))
    conj = young_conjugate(omega, np.linspace(0.0, smax, points))
    store.write_csv("conjugate.csv", ["s", "phi_star", "argmax_u"], zip(conj.sgrid, conj.vals, conj.argmax_u))

    report = ConjugateReport(
        name=omega.name,
        certificates=CertificateBundle(certificates=dict(omega.certificates)),
        conjugate_certificates=CertificateBundle(certificates=dict(conj.certificates)),
        unbounded=conj.unbounded,
    )
    if _flag(cfg.options, "biconjugate"):
        report.biconjugate_error = biconjugate(omega, conj).max_error
    if cfg.options.get("matrix"):
        xs = parse_xs(cfg.options["matrix"])
        # FctmodViolation propagates to exit 3
        mr = associated_matrix(omega, xs, K=num.K, tol=num.tol)
        report.matrix_xs = mr.matrix.xs
        report.order_slack = mr.order_slack
        report.fctmod_slack = mr.fctmod_slack
        report.fctmod_pairs = mr.fctmod_pairs
        rows = [
            (x, k, value)
            for x, member in mr.matrix.members
            for k, value in enumerate(member.logM.tolist())
        ]
        store.write_csv("matrix.csv", ["x", "k", "logOmega"], rows)
    store.write_model("report.json", report)

    summary = {
        "name": omega.name,
        "failed": report.certificates.failed(),
        "biconjugate_error": report.biconjugate_error,
        "fctmod_slack": report.fctmod_slack,
        "fctmod_verified": report.fctmod_slack is not None and report.fctmod_slack >= -num.tol,
    }
    log.info("Conjugate computed", **summary)
    return EXIT_OK, summary


def _division_inputs(cfg: RunConfig, j: int) -> Tuple[SmoothFn1D, SmoothFn1D, Optional[SmoothFn1D]]:
    dcap = cfg.numerics.dcap
    if cfg.inputs.get("f"):
        f = function_from_builtin(cfg.inputs["f"], dcap=dcap)
        return f.power(j), f.power(j + 1), f
    if cfg.inputs.get("g") and cfg.inputs.get("h"):
        g = function_from_builtin(cfg.inputs["g"], dcap=dcap)
        h = function_from_builtin(cfg.inputs["h"], dcap=dcap)
        return g, h, None
    raise InvalidInput("divide needs --f or both --g and --h")


def _division_matrix(cfg: RunConfig) -> WeightMatrix:
    num = cfg.numerics
    if cfg.inputs.get("omega"):
        xs = parse_xs(cfg.options.get("matrix") or "1")
        return associated_matrix(_load_omega(cfg.inputs["omega"], num.tol), xs, K=num.K, tol=num.tol).matrix
    M = _load_sequence(cfg.inputs.get("seq") or "gevrey:2", num.K)
    return WeightMatrix(members=[(1.0, M)])


def cmd_divide(cfg: RunConfig, store: ArtifactStore, log) -> Tuple[int, dict]:
    num = cfg.numerics
    j = int(cfg.options.get("j", "1"))
    mode = cfg.options.get("mode", "R")
    g, h, f_true = _division_inputs(cfg, j)
    chain = chain_select(_division_matrix(cfg), j, mode)
    store.write_json(
        "chain.json",
        {
            "mode": chain.mode,
            "indices": chain.indices,
            "labels": chain.labels,
            "links": [link.model_dump(mode="json") for link in chain.links],
        },
    )

    report = joris_divide(g, h, j, chain.members, num.eps_list(), n=num.grid, f_true=f_true)
    store.write_model("report.json", report)
    store.write_csv("levels.csv", ["eps", "delta", "r", "err_u", "err_final", "bound_final"], report.csv_rows())
    if report.recovered is not None:
        store.write_csv("recovered.csv", ["x", "f"], zip(report.recovered.x, report.recovered.y))
    if _flag(cfg.options, "dbar_map") and report.levels:
        fe = report.levels[-1].approximant
        w = dbar(fe)
        zz = fe.z[fe.mask]
        store.write_csv(
            "dbar_map.csv",
            ["x", "y", "abs_dbar"],
            zip(zz.real.tolist(), zz.imag.tolist(), np.abs(w.values[fe.mask]).tolist()),
        )

    violations = report.violations
    summary = {
        "j": report.j,
        "k": report.k,
        "s": report.s,
        "levels": len(report.levels),
        "c7": report.c7,
        "floor_region": report.floor_region,
        "failed": report.certificates.failed(),
        "violations": violations,
    }
    if violations:
        log.warning("Division bounds violated", **summary)
        return EXIT_VIOLATION, summary
    log.info("Division finished", **summary)
    return EXIT_OK, summary


COMMANDS: Dict[str, Callable[[RunConfig, ArtifactStore, object], Tuple[int, dict]]] = {
    "check-sequence": cmd_check_sequence,
    "conjugate": cmd_conjugate,
    "divide": cmd_divide,
}


# ---------------------------------------------------------------------------
# parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--K", type=int, default=None, help="Sequence truncation (default: 256).")
    common.add_argument("--grid", type=int, default=None, help="Grid nodes along x (default: 512).")
    common.add_argument("--eps0", type=float, default=None, help="Largest ellipse parameter (default: 0.4).")
    common.add_argument("--levels", type=int, default=None, help="Number of dyadic eps levels (default: 5).")
    common.add_argument("--tol", type=float, default=None, help="Comparison tolerance (default: 1e-9).")
    common.add_argument("--out", type=str, default=None, help="Run directory (default: $CARLEMAN_OUT_DIR/<command>).")

    parser = argparse.ArgumentParser(prog="carleman", description="Weight sequences, weight functions and division.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-sequence", parents=[common], help="Certificates of one weight sequence.")
    p.add_argument("seq", help="Builtin name (factorial, gevrey:s, q:n, exp-k2) or JSON path.")

    p = sub.add_parser("conjugate", parents=[common], help="Young conjugate and associated matrix.")
    p.add_argument("omega", help="Builtin weight function (power:a, log2, t-over-log) or JSON path.")
    p.add_argument("--matrix", default=None, help="Matrix indices, e.g. x=0.5,1,2.")
    p.add_argument("--biconjugate", action="store_true", help="Report the biconjugation error.")
    p.add_argument("--smax", type=float, default=64.0, help="Largest s of the conjugate grid.")
    p.add_argument("--points", type=int, default=257, help="Points of the conjugate grid.")

    p = sub.add_parser("divide", parents=[common], help="Recover f from g = f^j and h = f^(j+1).")
    p.add_argument("--f", default=None, help="Test function; g and h become its powers.")
    p.add_argument("--g", default=None, help="Test function standing for f^j.")
    p.add_argument("--h", default=None, help="Test function standing for f^(j+1).")
    p.add_argument("--j", type=int, default=1, help="Power j >= 1.")
    p.add_argument("--seq", default=None, help="Weight sequence (default: gevrey:2).")
    p.add_argument("--omega", default=None, help="Weight function whose associated matrix is used.")
    p.add_argument("--matrix", default=None, help="Matrix indices for --omega, e.g. x=0.5,1,2.")
    p.add_argument("--mode", choices=["R", "B"], default="R", help="Roumieu or Beurling chain.")
    p.add_argument("--dbar-map", action="store_true", dest="dbar_map", help="Dump |dbar| of the finest approximant.")

    p = sub.add_parser("replay", help="Re-execute a saved manifest.")
    p.add_argument("manifest", help="manifest.json or the run directory holding it.")
    p.add_argument("--out", type=str, default=None, help="Run directory (default: <run>-replay).")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    numerics = NumericsConfig(
        **{name: getattr(args, name) for name in NUMERIC_FLAGS if getattr(args, name) is not None}
    )
    out_dir = Path(args.out) if args.out else get_settings().out_dir / args.command
    if args.command == "check-sequence":
        inputs, options = {"seq": args.seq}, {}
    elif args.command == "conjugate":
        inputs = {"omega": args.omega}
        options = {
            "matrix": args.matrix or "",
            "biconjugate": str(args.biconjugate).lower(),
            "smax": repr(args.smax),
            "points": str(args.points),
        }
    else:
        inputs = {"f": args.f, "g": args.g, "h": args.h, "seq": args.seq, "omega": args.omega}
        options = {
            "j": str(args.j),
            "mode": args.mode,
            "matrix": args.matrix or "",
            "dbar_map": str(args.dbar_map).lower(),
        }
    return RunConfig(command=args.command, inputs=inputs, options=options, numerics=numerics, out_dir=out_dir)


def load_manifest(path: str, out: Optional[str] = None) -> RunConfig:
    src = Path(path)
    if src.is_dir():
        src = src / "manifest.json"
    cfg = RunConfig.from_json(src.read_text())
    if cfg.version != __version__:
        logger.warning("Manifest from another version", manifest=cfg.version, running=__version__)
    target = Path(out) if out else cfg.out_dir.with_name(cfg.out_dir.name + "-replay")
    return cfg.model_copy(update={"out_dir": target, "version": __version__})


def execute(cfg: RunConfig) -> int:
    """Write the manifest, run the command and print its summary."""
    if cfg.command not in COMMANDS:
        raise InvalidInput(f"unknown command '{cfg.command}'", command=cfg.command)
    store = FileArtifactStore(cfg.out_dir)
    store.set("manifest.json", cfg.to_json())
    run_id = cfg.out_dir.name
    log = get_run_logger(run_id, cfg.out_dir, {"command": cfg.command})
    try:
        log.info("Run started", inputs=cfg.inputs, options=cfg.options)
        code, summary = COMMANDS[cfg.command](cfg, store, log)
        log.info("Run finished", exit_code=code)
    finally:
        release_run_logger(run_id)
    print(json.dumps(summary, indent=2, default=str))
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT
    try:
        if args.command == "replay":
            cfg = load_manifest(args.manifest, args.out)
        else:
            cfg = config_from_args(args)
        return execute(cfg)
    except VerificationFailed as e:
        logger.error("Verification failed", error=str(e), kind=type(e).__name__)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    except NumericalLimit as e:
        logger.error("Numerical limit reached", error=str(e), kind=type(e).__name__)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_LIMIT
    except (InvalidInput, OSError, ValueError) as e:
        logger.error("Invalid input", error=str(e), kind=type(e).__name__)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT


def run_cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run_cli()
