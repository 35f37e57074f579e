"""prescurv CLI: generate curves, prescribe curvature, verify and export from the command line."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from prescurv.core.config import DEFAULT_TOLERANCES, LOOP_MODES, Tolerances
from prescurv.core.curves import CurvatureSpec, ParamCurve
from prescurv.core.errors import (
    BadPreset, CannotSegment, CapTooSmall, CertificateFailed, CurveParseError, DomainMismatch,
    ExpressionError, InfeasibleMargin, NoConvergence, NotEmbedded, PerturbationFailed,
    PrescurvError, RUnderflow, UnsupportedFormat,
)

logger = logging.getLogger("prescurv")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_CHECKS_FAILED = 5

# First matching class wins
EXIT_CODES = (
    (InfeasibleMargin, EXIT_INFEASIBLE),
    ((NoConvergence, RUnderflow, PerturbationFailed, CannotSegment, CapTooSmall), EXIT_NO_CONVERGENCE),
    ((CertificateFailed, NotEmbedded), EXIT_CHECKS_FAILED),
    ((CurveParseError, BadPreset, UnsupportedFormat, ExpressionError, DomainMismatch, OSError, ValueError),
     EXIT_USAGE),
    (PrescurvError, EXIT_NO_CONVERGENCE),
)


def exit_code_for(exc: BaseException) -> int:
    for classes, code in EXIT_CODES:
        if isinstance(exc, classes):
            return code
    raise exc


@dataclass
class RunConfig:
    """Every flag of every subcommand; the manifest records it verbatim."""
    command: str
    preset: str | None = None
    params: dict = field(default_factory=dict)
    input: str | None = None
    reference: str | None = None
    kappa: str = "2"
    epsilon: float = 0.1
    pinned: list[float] = field(default_factory=list)
    count: int | None = None
    seed: int = 0
    loop_mode: str = DEFAULT_TOLERANCES.loop_mode
    k: int | None = None
    samples_per_lap: int = DEFAULT_TOLERANCES.samples_per_lap
    solver_tol: float = DEFAULT_TOLERANCES.solver_tol
    speed_tol: float = DEFAULT_TOLERANCES.speed_tol
    curvature_tol: float = 0.01
    knot: bool = False
    format: str = "obj"
    output: str | None = None
    manifest: str | None = None
    verbose: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        values = {name: getattr(args, name) for name in cls.__dataclass_fields__ if hasattr(args, name)}
        values["params"] = _parse_params(getattr(args, "param", None) or [])
        values["pinned"] = _parse_pinned(getattr(args, "pinned", None))
        return cls(**values)

    def tolerances(self) -> Tolerances:
        if self.loop_mode not in LOOP_MODES:
            raise ValueError(f"loop mode must be one of {LOOP_MODES}")
        return DEFAULT_TOLERANCES.replace(
            seed=self.seed, loop_mode=self.loop_mode, k=self.k, samples_per_lap=self.samples_per_lap,
            solver_tol=self.solver_tol, speed_tol=self.speed_tol,
        )


def _parse_params(pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise BadPreset(f"Preset parameter {pair!r} is not key=value")
        try:
            value = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                raise BadPreset(f"Preset parameter {key} must be numeric, got {raw!r}") from None
        params[key.strip()] = value
    return params


def _parse_pinned(text: str | None) -> list[float]:
    if not text:
        return []
    return [float(part) for part in text.split(",") if part.strip()]


def parse_kappa(text: str, domain) -> CurvatureSpec:
    """A number gives a constant target; anything else is an expression in t."""
    try:
        return CurvatureSpec.constant(domain, float(text))
    except ValueError:
        return CurvatureSpec.expression(domain, text)


def load_curve(config: RunConfig) -> ParamCurve:
    from prescurv.adapters.files import read_curve_csv
    from prescurv.core.presets import make_preset

    if config.input:
        return read_curve_csv(config.input)
    if not config.preset:
        raise BadPreset("Give --input or --preset")
    params = dict(config.params)
    if config.count:
        params["count"] = config.count
    return make_preset(config.preset, **params)


def acceptance_checks(metrics: dict, config: RunConfig) -> dict:
    checks = {
        "curvature": metrics["curvature_sup"] <= config.curvature_tol,
        "speed": metrics["speed_deviation"] <= config.speed_tol,
    }
    if metrics.get("c1_distance") is not None:
        checks["c1_distance"] = metrics["c1_distance"] <= config.epsilon
    if metrics.get("tangency"):
        checks["tangency"] = max(metrics["tangency"].values()) <= 1e-6
    return checks


def cmd_generate(config: RunConfig) -> int:
    """Write a preset curve to CSV."""
    from prescurv.adapters.files import write_curve_csv

    curve = load_curve(config)
    output = config.output or f"{config.preset}.csv"
    write_curve_csv(output, curve)
    logger.info("[generate] %s: %d samples -> %s", config.preset, curve.count, output)
    return EXIT_OK


def cmd_prescribe(config: RunConfig) -> int:
    """Run the pipeline, write the output curve and the run manifest."""
    from prescurv.adapters.files import write_curve_csv, write_manifest
    from prescurv.core.pipeline import ProblemSpec, constant_curvature_knot, prescribe_curvature

    tolerances = config.tolerances()
    manifest = {"config": asdict(config), "tolerances": tolerances.as_dict(), "seed": config.seed}
    manifest_path = config.manifest or str(Path(config.output or "prescribed.csv").with_suffix(".json"))
    try:
        f = load_curve(config)
        kappa = parse_kappa(config.kappa, f.domain)
        manifest["kappa"] = kappa.describe()
        if config.knot:
            result, report = constant_curvature_knot(f, kappa, tolerances)
            from prescurv.core.verify import curve_metrics
            metrics = curve_metrics(result, kappa, unit_speed=False).to_dict()
        else:
            result, report = prescribe_curvature(ProblemSpec(f, kappa, config.epsilon, tuple(config.pinned)),
                                                 tolerances)
            metrics = report["metrics"]
    except PrescurvError as exc:
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, CertificateFailed) and exc.knot is not None:
            write_curve_csv(config.output or "prescribed.csv", exc.knot)
            manifest["report"] = exc.certificate
        write_manifest(manifest_path, manifest)
        raise

    write_curve_csv(config.output or "prescribed.csv", result)
    checks = acceptance_checks(metrics, config)
    manifest.update(report=report, metrics=metrics, checks=checks, ok=all(checks.values()))
    write_manifest(manifest_path, manifest)
    print(json.dumps({"metrics": metrics, "checks": checks}, indent=2, default=str))
    return EXIT_OK if manifest["ok"] else EXIT_CHECKS_FAILED


def cmd_verify(config: RunConfig) -> int:
    """Metrics of an output curve against its reference and target curvature."""
    from prescurv.adapters.files import read_curve_csv
    from prescurv.core.verify import curve_metrics, homotopy_certificate

    f_tilde = read_curve_csv(config.input)
    f = read_curve_csv(config.reference) if config.reference else None
    if f is not None and not f.domain.matches(f_tilde.domain):
        raise DomainMismatch(f"Domains differ: {f.domain} vs {f_tilde.domain}")
    kappa = parse_kappa(config.kappa, f_tilde.domain)
    metrics = curve_metrics(f_tilde, kappa, f, config.pinned).to_dict()
    result = {"metrics": metrics}
    if f is not None and f.domain.periodic:
        certificate = homotopy_certificate(f, f_tilde)
        result["homotopy"] = {"ok": certificate["ok"],
                              "injective": [step["injective"] for step in certificate["steps"]]}
    result["checks"] = acceptance_checks(metrics, config)
    print(json.dumps(result, indent=2, default=str))
    return EXIT_OK if all(result["checks"].values()) else EXIT_CHECKS_FAILED


def cmd_export(config: RunConfig) -> int:
    """Convert a curve CSV to OBJ or JSON."""
    from prescurv.adapters.files import export_curve, read_curve_csv

    curve = read_curve_csv(config.input)
    output = config.output or str(Path(config.input).with_suffix(f".{config.format}"))
    export_curve(curve, output, config.format)
    logger.info("[export] %s -> %s", config.input, output)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "prescribe": cmd_prescribe,
    "verify": cmd_verify,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prescurv",
        description="prescurv - curves and knots with prescribed curvature",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def source_flags(p):
        p.add_argument("--preset", choices=["circle", "helix", "torus_knot", "fourier_knot"])
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="Preset parameter")
        p.add_argument("--input", "-i", help="Curve CSV (t,x1,...,xn)")
        p.add_argument("--count", "-n", type=int, help="Samples for preset curves")

    p_gen = subparsers.add_parser("generate", help="Write a preset curve to CSV")
    source_flags(p_gen)
    p_gen.add_argument("--output", "-o")

    p_pre = subparsers.add_parser("prescribe", help="Run the prescribed-curvature pipeline")
    source_flags(p_pre)
    p_pre.add_argument("--kappa", default="2", help="Target curvature: number or expression in t")
    p_pre.add_argument("--epsilon", type=float, default=0.1)
    p_pre.add_argument("--pinned", help="Comma-separated parameters to keep tangent")
    p_pre.add_argument("--seed", type=int, default=0)
    p_pre.add_argument("--loop-mode", dest="loop_mode", choices=list(LOOP_MODES),
                       default=DEFAULT_TOLERANCES.loop_mode)
    p_pre.add_argument("--k", type=int, help="Partition size (default max(n + 5, 8))")
    p_pre.add_argument("--samples-per-lap", dest="samples_per_lap", type=int,
                       default=DEFAULT_TOLERANCES.samples_per_lap)
    p_pre.add_argument("--solver-tol", dest="solver_tol", type=float, default=DEFAULT_TOLERANCES.solver_tol)
    p_pre.add_argument("--speed-tol", dest="speed_tol", type=float, default=DEFAULT_TOLERANCES.speed_tol)
    p_pre.add_argument("--curvature-tol", dest="curvature_tol", type=float, default=0.01)
    p_pre.add_argument("--knot", action="store_true", help="Build an isotopic constant-curvature knot")
    p_pre.add_argument("--output", "-o")
    p_pre.add_argument("--manifest")

    p_ver = subparsers.add_parser("verify", help="Metrics of an output curve")
    p_ver.add_argument("--input", "-i", required=True, help="Output curve CSV")
    p_ver.add_argument("--reference", "-r", help="Input curve CSV")
    p_ver.add_argument("--kappa", default="2")
    p_ver.add_argument("--epsilon", type=float, default=0.1)
    p_ver.add_argument("--pinned")
    p_ver.add_argument("--speed-tol", dest="speed_tol", type=float, default=DEFAULT_TOLERANCES.speed_tol)
    p_ver.add_argument("--curvature-tol", dest="curvature_tol", type=float, default=0.01)

    p_exp = subparsers.add_parser("export", help="Convert a curve CSV to OBJ or JSON")
    p_exp.add_argument("--input", "-i", required=True)
    p_exp.add_argument("--format", "-f", choices=["obj", "json"], default="obj")
    p_exp.add_argument("--output", "-o")

    for sub in (p_gen, p_pre, p_ver, p_exp):
        sub.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.command](config)
    except (PrescurvError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        print(f"Error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
