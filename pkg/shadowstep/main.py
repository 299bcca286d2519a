"""Command-line front end: simulate, converge, benchmark, shadow-verify and schemes."""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from shadowstep.commutators import CommutatorExpr
from shadowstep.config import build_run_config, get_config, load_run_file, update_config
from shadowstep.errors import (
    ConfigurationError,
    DomainError,
    IntegrationError,
    SchemeError,
    SeriesError,
)
from shadowstep.models import Experiment, RunConfig, RunStatus
from shadowstep.schemes import SCHEME_NAMES, SplittingScheme, build_scheme, format_scheme, parse_scheme
from shadowstep.shadow import format_series_as_claim, from_scheme, known_claim, shadow_log, verify_claim
from shadowstep.threebody import (
    convergence_order,
    cost_accuracy,
    energy_error_series,
    matched_cost,
    run_parallel,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RESIDUAL = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_SCHEME = 4

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def _num(x: float) -> str:
    """Shortest decimal that round-trips a 64-bit float."""
    return repr(float(x))


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "-", name).strip("-")


def write_atomic(path: Path, text: str) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _emit(config: RunConfig, outputs: list[tuple[str, str]], output_dir: str) -> None:
    """One text block per scheme; with several schemes each file gets a scheme suffix.

    Relative output paths are resolved under output_dir.
    """
    if config.output is None:
        for _, text in outputs:
            sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(output_dir) / config.output
    for name, text in outputs:
        path = target if len(outputs) == 1 else target.with_name(f"{target.stem}-{_slug(name)}{target.suffix}")
        write_atomic(path, text)
        logger.info(f"wrote {path}")


def resolve_schemes(config: RunConfig) -> list[SplittingScheme]:
    if config.scheme_text:
        scheme = parse_scheme(config.scheme_text)
        scheme.check_consistency()
        return [scheme]
    return [build_scheme(name, M=config.M, lam=config.lam) for name in config.schemes]


def parse_claims(entries: Sequence[str]) -> dict[int, CommutatorExpr]:
    """`grade:expression` entries, e.g. `3:-1/72 [V,[T,V]]`."""
    claims: dict[int, CommutatorExpr] = {}
    for entry in entries:
        grade, sep, text = entry.partition(":")
        if not sep or not grade.strip().isdigit():
            raise ConfigurationError(f"claim must look like '<grade>:<expression>', got {entry!r}", field="claims")
        try:
            claims[int(grade)] = CommutatorExpr.parse(text)
        except SeriesError as e:
            raise ConfigurationError(str(e), field="claims") from e
    return claims


# ── Experiments ──


def run_simulate(config: RunConfig, workers: int, use_cache: bool) -> list[tuple[str, str]]:
    schemes = resolve_schemes(config)

    def progress(status: RunStatus) -> None:
        logger.debug(f"{status.scheme}: step {status.step}/{status.steps_total} err={status.rel_energy_error:.3e}")

    def job(scheme: SplittingScheme) -> tuple[str, str]:
        series = energy_error_series(
            scheme, config.h, config.t_end, config.sample_every, use_cache=use_cache, progress=progress
        )
        lines = ["step,time_mo,energy,rel_energy_error"]
        for k, t, e, err in zip(series.steps, series.times, series.energies, series.rel_errors):
            lines.append(f"{int(k)},{_num(t)},{_num(e)},{_num(err)}")
        logger.info(f"{scheme.name}: h={config.h} t_end={config.t_end} max_rel_err={series.max_rel_err:.3e}")
        return scheme.name, "\n".join(lines) + "\n"

    return run_parallel([(lambda s=s: job(s)) for s in schemes], workers)


def run_converge(config: RunConfig, workers: int, use_cache: bool) -> list[tuple[str, str]]:
    outputs = []
    for scheme in resolve_schemes(config):
        report = convergence_order(scheme, config.h_grid, config.t_end, workers=workers, use_cache=use_cache)
        lines = ["h,max_rel_err"]
        lines += [f"{_num(h)},{_num(e)}" for h, e in zip(report.h, report.max_rel_err)]
        lines.append(f"slope={_num(report.slope) if report.slope is not None else 'nan'}")
        if report.flagged:
            logger.warning(f"{scheme.name}: convergence fit flagged: {report.note}")
        outputs.append((scheme.name, "\n".join(lines) + "\n"))
    return outputs


def run_benchmark(config: RunConfig, workers: int, use_cache: bool) -> list[tuple[str, str]]:
    schemes = resolve_schemes(config)
    rows = cost_accuracy(
        schemes, [config.h_grid] * len(schemes), config.t_end, config.weights, workers=workers, use_cache=use_cache
    )
    lines = ["scheme,h,weighted_cost,max_rel_err"]
    lines += [f"{r.scheme},{_num(r.h)},{_num(r.weighted_cost)},{_num(r.max_rel_err)}" for r in rows]
    for scheme in schemes:
        cost = matched_cost(rows, scheme.name, config.target)
        logger.info(f"{scheme.name}: weighted cost at error {config.target:.0e} is {cost:.1f}")
    return [("benchmark", "\n".join(lines) + "\n")]


def run_shadow_verify(config: RunConfig, degree: int) -> tuple[list[tuple[str, str]], bool]:
    outputs = []
    all_clear = True
    extra = parse_claims(config.claims)
    for scheme in resolve_schemes(config):
        sym = from_scheme(scheme, degree, commuting=config.commuting)
        log = shadow_log(sym)
        claims = {} if config.scheme_text else known_claim(scheme, config.M, config.lam, config.commuting)
        claims.update(extra)
        residual = verify_claim(sym, claims, log=log)
        lines = [
            f"scheme: {scheme.name}",
            f"stages: {format_scheme(scheme)}",
            f"palindromic: {'yes' if scheme.is_palindromic else 'no'}",
        ]
        if config.commuting:
            lines.append("relations: [V1,V2] = 0")
        excess = log - sym.hamiltonian()
        for g in range(2, degree + 1):
            lines.append(f"grade{g}: {format_series_as_claim(excess.grade(g), g, sym.single_potential)}")
        lines.append(f"residual: {format_series_as_claim(residual, 0, sym.single_potential)}")
        if not residual.is_zero():
            all_clear = False
            logger.warning(f"{scheme.name}: residual is not empty")
        outputs.append((scheme.name, "\n".join(lines) + "\n"))
    return outputs, all_clear


def list_schemes(M: int) -> str:
    lines = [f"{name}: {format_scheme(build_scheme(name, M=M))}" for name in SCHEME_NAMES]
    return "\n".join(lines) + "\n"


def run(config: RunConfig) -> int:
    """Execute one configured experiment and return the process exit status."""
    app = get_config()
    workers = config.workers or app.workers
    degree = config.degree or app.max_degree
    status = EXIT_OK
    try:
        match config.experiment:
            case Experiment.SIMULATE:
                outputs = run_simulate(config, workers, app.force_cache)
            case Experiment.CONVERGE:
                outputs = run_converge(config, workers, app.force_cache)
            case Experiment.BENCHMARK:
                outputs = run_benchmark(config, workers, app.force_cache)
            case Experiment.SHADOW_VERIFY:
                outputs, ok = run_shadow_verify(config, degree)
                status = EXIT_OK if ok else EXIT_RESIDUAL
        _emit(config, outputs, app.output_dir)
    except ConfigurationError as e:
        logger.error(f"configuration error ({e.field or 'config'}): {e}")
        return EXIT_CONFIG
    except (IntegrationError, DomainError) as e:
        logger.error(f"integration failed: {e}", exc_info=True)
        return EXIT_INTEGRATION
    except (SchemeError, SeriesError) as e:
        logger.error(f"scheme error: {e}")
        return EXIT_SCHEME
    return status


# ── Argument parsing ──


def _floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowstep", description="Nested force-gradient integrators and shadow Hamiltonians")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="YAML run configuration; flags override its values")
        p.add_argument("--scheme", type=_names, dest="schemes", help="scheme name(s), comma-separated")
        p.add_argument("--scheme-text", dest="scheme_text", help="custom scheme in the stage grammar")
        p.add_argument("--M", type=int, help="inner substeps for nested schemes")
        p.add_argument("--lambda", dest="lam", help="outer kick weight as p/q")
        p.add_argument("--output", help="output file; stdout when omitted")
        p.add_argument("--workers", type=int, help="parallel independent runs")

    p = sub.add_parser("simulate", help="energy error along one run")
    common(p)
    p.add_argument("--h", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--sample-every", dest="sample_every", type=int)

    p = sub.add_parser("converge", help="max energy error per step size and fitted order")
    common(p)
    p.add_argument("--h", type=_floats, dest="h_grid", help="descending step sizes, comma-separated")
    p.add_argument("--t-end", dest="t_end", type=float)

    p = sub.add_parser("benchmark", help="weighted evaluation cost vs max energy error")
    common(p)
    p.add_argument("--h", type=_floats, dest="h_grid", help="descending step sizes, comma-separated")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--target", type=float, help="matched accuracy level for the cost summary")
    for name in ("slow-force", "fast-force", "slow-force-gradient", "fast-force-gradient", "drift"):
        p.add_argument(f"--w-{name}", dest=f"w_{name.replace('-', '_')}", type=float, help=f"cost weight for {name}")

    p = sub.add_parser("shadow-verify", help="exact shadow Hamiltonian and claim residual")
    common(p)
    p.add_argument("--degree", type=int)
    p.add_argument("--commuting", action="store_true", default=None, help="impose [V1,V2] = 0")
    p.add_argument("--claim", action="append", dest="claims", help="extra claim as <grade>:<expression>")

    p = sub.add_parser("schemes", help="list registry schemes in the stage grammar")
    p.add_argument("--M", type=int, default=30)
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    data = {k: v for k, v in vars(args).items() if k not in ("command", "config", "log_level")}
    weights = {k[2:]: data.pop(k) for k in list(data) if k.startswith("w_")}
    weights = {k: v for k, v in weights.items() if v is not None}
    if weights:
        data["weights"] = weights
    if "lam" in data:
        data["lambda"] = data.pop("lam")
    data["experiment"] = args.command
    return data


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        app = update_config({"log_level": args.log_level.upper()} if args.log_level else {})
    except ConfigurationError as e:
        print(f"configuration error ({e.field}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, app.log_level.upper(), logging.INFO), format=LOG_FORMAT)

    if args.command == "schemes":
        try:
            text = list_schemes(args.M)
        except ConfigurationError as e:
            logger.error(f"configuration error ({e.field or 'M'}): {e}")
            return EXIT_CONFIG
        sys.stdout.write(text)
        return EXIT_OK
    try:
        file_data = load_run_file(args.config) if args.config else None
        config = build_run_config(file_data, overrides_from_args(args))
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"configuration error ({getattr(e, 'field', None) or 'config'}): {e}")
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
