"""
Command-line interface.

Machine results go to stdout as JSON, tables to --out, logs and the run
manifest to stderr (or --manifest). Exit codes: 0 success, 2 invalid input,
3 I/O error, 4 internal invariant violation.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from config.settings import settings
from detection.boxcox import estimate_eta, normalized_spread, transform_series
from detection.calibration import calibrate_cluster, calibrate_lrt
from detection.cluster import detect_cluster
from detection.errors import InvalidInputError, InvariantViolation, SegpointError
from detection.gof import ad_exponential
from detection.lrt import build_elrt_table, detect_lrt, process_cache
from detection.parallel import child_seed
from detection.series import DetectionResult, ObservationSeries
from detection.thresholds import ThresholdProfile
from experiments.bench import ExperimentGrid, run_grid
from experiments.reports import write_report
from simulation.carhop import CarhopConfig, check_audit, pool_from_seed, run_study, simulate
from simulation.synthetic import SyntheticSpec, generate, segment_means
from storage.manifest import RunManifest, emit_manifest
from storage.profiles import load_profile, save_profile
from storage.series_files import parse_series, read_series, sidecar_path, write_runchart, write_series, write_sidecar
from storage.tables import write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_INVARIANT = 4

REFERENCE_PROFILE = "reference"


def setup_logging(level: str) -> None:
    """Route all logging through one RichHandler on stderr."""
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _float_list(raw: str) -> List[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}") from e


def _int_list(raw: str) -> List[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from e


def _grid(raw: str) -> Tuple[float, float, float]:
    values = _float_list(raw)
    if len(values) != 3:
        raise argparse.ArgumentTypeError("grid must be lo,hi,step")
    return values[0], values[1], values[2]


def _transform(raw: str):
    if raw in ("auto", "off"):
        return raw
    try:
        return float(raw)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"transform must be auto, off or a number, got {raw!r}") from e


def _eta(raw: str):
    if raw == "auto":
        return raw
    try:
        return float(raw)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"eta must be auto or a number, got {raw!r}") from e


def _print_json(payload) -> None:
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")


def _resolve_g(g: Optional[int], m: int, method: str) -> int:
    limit = m - 1 if method == "cluster" else settings.max_changes
    return g if g is not None else max(1, min(settings.max_changes, limit))


def _resolve_alphas(alphas: Optional[List[float]], g: int) -> List[float]:
    if alphas is not None:
        return alphas
    if g > len(settings.alphas):
        raise InvalidInputError(f"g={g} needs explicit --alphas (SEGPOINT_ALPHAS has {len(settings.alphas)})")
    return list(settings.alphas[:g])


def resolve_profile(args, method: str, m: int, manifest: RunManifest) -> ThresholdProfile:
    """
    Threshold profile for a run: a file, the published reference table,
    or a fresh calibration for (method, m, g) seeded by the run seed.
    """
    if args.thresholds == REFERENCE_PROFILE:
        logger.warning("using the published reference thresholds rather than a calibrated profile")
        profile = ThresholdProfile.reference_table(method)
    elif args.thresholds:
        manifest.add_input(args.thresholds)
        profile = load_profile(args.thresholds)
    else:
        g = _resolve_g(args.g, m, method)
        alphas = _resolve_alphas(args.alphas, g)
        reps = args.calibration_reps or settings.auto_calibration_reps
        logger.info(f"calibrating {method} thresholds for m={m}, g={g} from {reps} null series")
        if method == "cluster":
            return calibrate_cluster(m, g, alphas, reps=reps, sets=1, rng_seed=args.seed,
                                     transform_eta=args.transform, variant=args.variant,
                                     policy=args.policy, grid=args.grid, threads=args.threads,
                                     progress=not args.no_progress)
        return calibrate_lrt(m, g, alphas, reps=reps, rng_seed=args.seed, elrt_runs=args.elrt_runs,
                             min_seg=args.min_seg, threads=args.threads, progress=not args.no_progress)

    if args.g is not None and args.g < profile.g:
        profile = profile.truncated(args.g)
    if profile.series_length is not None and profile.series_length != m:
        logger.warning(f"profile was calibrated for m={profile.series_length}, series has m={m}")
    return profile


def _read_input(args, manifest: RunManifest) -> ObservationSeries:
    if args.input != "-":
        manifest.add_input(args.input)
        return read_series(args.input, args.column)
    text = sys.stdin.read()
    manifest.add_input("-", text.encode("utf-8"))
    return parse_series(text, args.column, "<stdin>")


def cmd_detect(args, manifest: RunManifest) -> int:
    series = _read_input(args, manifest)
    if args.method == "lrt" and series.m < 2 * args.min_seg:
        series.require_positive()
        logger.warning(f"{series.m} observations admit no test with min_seg={args.min_seg}, reporting no changes")
        result = DetectionResult(method="lrt", variant="binary-segmentation", series_length=series.m,
                                 max_changes=args.g or settings.max_changes)
        _print_json(result.model_dump(mode="json"))
        return EXIT_OK
    profile = resolve_profile(args, args.method, series.m, manifest)
    if args.method == "cluster":
        result = detect_cluster(series, profile, args.transform, args.variant, args.policy, grid=args.grid)
    else:
        result = detect_lrt(series, profile, process_cache(args.elrt_runs, args.min_seg, args.seed))
    payload = result.model_dump(mode="json")
    payload["threshold_profile"] = profile.model_dump(mode="json")
    _print_json(payload)
    return EXIT_OK


def cmd_calibrate(args, manifest: RunManifest) -> int:
    g = args.g if args.g is not None else settings.max_changes
    alphas = _resolve_alphas(args.alphas, g)
    if args.method == "cluster":
        profile = calibrate_cluster(
            args.m, g, alphas, reps=args.reps, sets=args.sets, rng_seed=args.seed,
            transform_eta=args.transform, variant=args.variant, policy=args.policy,
            grid=args.grid, threads=args.threads, progress=not args.no_progress,
        )
    else:
        profile = calibrate_lrt(
            args.m, g, alphas, reps=args.reps * args.sets, rng_seed=args.seed,
            elrt_runs=args.elrt_runs, min_seg=args.min_seg, threads=args.threads,
            progress=not args.no_progress,
        )
    if args.out:
        save_profile(profile, args.out)
    else:
        _print_json(profile.model_dump(mode="json"))
    return EXIT_OK


def cmd_gen(args, manifest: RunManifest) -> int:
    placement = args.placement
    if placement != "equal":
        try:
            placement = _int_list(placement)
        except argparse.ArgumentTypeError as e:
            raise InvalidInputError(str(e)) from e
    spec = SyntheticSpec(m=args.m, changes=args.changes, lambda0=args.lambda0, delta=args.delta,
                         placement=placement, seed=args.seed)
    series, taus = generate(spec)
    write_series(series, args.out)
    sidecar = args.sidecar or (sidecar_path(args.out) if args.out != "-" else None)
    if sidecar:
        write_sidecar(sidecar, spec, taus, segment_means(spec))
    if args.emit_runchart:
        write_runchart(series, args.emit_runchart)
    logger.info(f"generated m={spec.m} with change points {taus}")
    return EXIT_OK


def cmd_elrt(args, manifest: RunManifest) -> int:
    table = build_elrt_table(args.m, args.runs, args.min_seg, (args.seed, args.m))
    df = pd.DataFrame({"m1": table.splits, "elrt": table.expected_values})
    if args.out:
        write_csv(df, args.out)
    else:
        df.to_csv(sys.stdout, index=False, lineterminator="\n")
    logger.info(f"Elrt table for m={table.series_length} from {table.runs_used} runs, seed {list(table.seed)}")
    return EXIT_OK


def cmd_boxcox(args, manifest: RunManifest) -> int:
    series = _read_input(args, manifest)
    estimated = args.eta == "auto"
    eta = estimate_eta(series, args.grid) if estimated else float(args.eta)
    log_gm = float(np.mean(np.log(series.require_positive().values)))
    transformed = transform_series(series, eta)
    payload = {
        "eta": eta,
        "estimated": estimated,
        "grid": list(args.grid),
        "objective": normalized_spread(series.values, eta, log_gm),
        "series_length": series.m,
    }
    if args.output:
        write_series(transformed, args.output)
    else:
        payload["transformed"] = transformed.values.tolist()
    _print_json(payload)
    return EXIT_OK


def cmd_gof(args, manifest: RunManifest) -> int:
    series = _read_input(args, manifest)
    _print_json(ad_exponential(series).model_dump(mode="json"))
    return EXIT_OK


def cmd_bench(args, manifest: RunManifest) -> int:
    reps = args.reps or ExperimentGrid.reps_for_scale(args.scale)
    profile = resolve_profile(args, args.method, args.m, manifest)
    grid = ExperimentGrid(
        method=args.method,
        m=args.m,
        changes=args.changes,
        deltas=args.deltas,
        reps=reps,
        variant=args.variant,
        transform=args.transform,
        policy=args.policy,
        boxcox_grid=args.grid,
        elrt_runs=args.elrt_runs,
        min_seg=args.min_seg,
        thresholds=profile,
        seed=args.seed,
    )
    report = run_grid(grid, threads=args.threads, progress=not args.no_progress)
    paths = write_report(report, args.out)
    _print_json({name: str(path) for name, path in paths.items()})
    return EXIT_OK


def cmd_carhop(args, manifest: RunManifest) -> int:
    config = CarhopConfig(mode=args.mode, customers_per_rep=args.customers, replications=args.reps,
                          pooled_mean=args.pooled_mean, seed=args.seed)
    fit = None
    if args.pool_from_seed is not None:
        manifest.seeds.append(args.pool_from_seed)
        pooled_mean, fit = pool_from_seed(config, args.pool_from_seed)
        config = config.model_copy(update={"mode": "II", "pooled_mean": pooled_mean})

    summary = run_study(config, threads=args.threads, progress=not args.no_progress, pooled_fit=fit)
    payload = summary.model_dump(mode="json", exclude=None if args.per_rep else {"per_rep"})
    _print_json(payload)

    if args.audit:
        _, trail = simulate(config, child_seed(config.seed, 0), audit=True)
        check_audit(trail, config.customers_per_rep)
        write_csv(pd.DataFrame([asdict(e) for e in trail]), args.audit)
        logger.info(f"wrote {len(trail)} audit events of replication 1 to {args.audit}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=settings.seed, help="Master seed")
    p.add_argument("--threads", type=int, default=settings.threads,
                   help="Worker processes (env SEGPOINT_THREADS)")
    p.add_argument("--manifest", default=None, help="Write the run manifest here instead of stderr")
    p.add_argument("--log-level", default=settings.log_level)
    p.add_argument("--no-progress", action="store_true", help="Disable progress bars")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", default="-", help="Series file, '-' for stdin (default)")
    p.add_argument("--column", default=None, help="CSV column name or 1-based number")


def _add_detector(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["cluster", "lrt"], default="cluster")
    p.add_argument("--variant", choices=["agglomerative", "agglo", "divisive"], default="agglomerative")
    p.add_argument("--transform", type=_transform, default="auto",
                   help="Box-Cox for clustering: auto, off or a fixed exponent")
    p.add_argument("--policy", choices=["pooled", "series", "none"], default="pooled",
                   help="Cluster variance in the distance: the series variance for every cluster (pooled), "
                        "each cluster's own (series) or the literal rule with 0 for singletons (none)")
    p.add_argument("--grid", type=_grid, default=settings.boxcox_grid, help="Box-Cox grid lo,hi,step")
    p.add_argument("--elrt-runs", type=int, default=settings.elrt_runs)
    p.add_argument("--min-seg", type=int, default=settings.min_seg)
    p.add_argument("--max-changes", "--g", dest="g", type=int, default=None,
                   help="Maximum number of change points G (env SEGPOINT_MAX_CHANGES)")
    p.add_argument("--alphas", type=_float_list, default=None, help="Per-level alphas a1,..,ag")


def _add_thresholds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--thresholds", default=None,
                   help="Profile JSON file, or 'reference' for the published table; "
                        "calibrated on the fly when omitted")
    p.add_argument("--calibration-reps", type=int, default=None,
                   help="Null series for on-the-fly calibration (env SEGPOINT_AUTO_CALIBRATION_REPS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segpoint",
        description="Change-point detection for simulation input data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="Detect change points in a series")
    _add_input(p)
    _add_detector(p)
    _add_thresholds(p)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", help="Calibrate per-level thresholds on null series")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--reps", type=int, default=settings.calibration_reps)
    p.add_argument("--sets", type=int, default=settings.calibration_sets)
    p.add_argument("--out", default=None, help="Profile JSON path (stdout when omitted)")
    _add_detector(p)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("gen", help="Generate a piecewise exponential series")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--changes", type=int, default=1)
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--placement", default="equal", help="'equal' or explicit change points i,j,k")
    p.add_argument("--out", default="-", help="Series file, '-' for stdout (default)")
    p.add_argument("--sidecar", default=None, help="Sidecar JSON path (default <out>.meta.json)")
    p.add_argument("--emit-runchart", default=None, help="Write (index, value) CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("elrt", help="Simulate the expected lrt table for one length")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--runs", type=int, default=settings.elrt_runs)
    p.add_argument("--min-seg", type=int, default=settings.min_seg)
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    _add_common(p)
    p.set_defaults(func=cmd_elrt)

    p = sub.add_parser("boxcox", help="Estimate (or apply) the Box-Cox exponent")
    _add_input(p)
    p.add_argument("--grid", type=_grid, default=settings.boxcox_grid)
    p.add_argument("--eta", type=_eta, default="auto", help="auto (estimate) or a fixed exponent")
    p.add_argument("--output", default=None, help="Write the transformed series here instead of into the JSON")
    _add_common(p)
    p.set_defaults(func=cmd_boxcox)

    p = sub.add_parser("gof", help="Anderson-Darling test for exponentiality")
    _add_input(p)
    _add_common(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("bench", help="Accuracy and precision experiments")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--changes", type=_int_list, default=[1, 2, 3, 4])
    p.add_argument("--deltas", type=_float_list, default=[0.5, 1.0, 2.0, 3.0, 4.0, 5.0])
    p.add_argument("--scale", type=float, default=1.0, help="Fraction of 1000 reps per cell")
    p.add_argument("--reps", type=int, default=None, help="Reps per cell (overrides --scale)")
    p.add_argument("--out", required=True, help="Output directory")
    _add_detector(p)
    _add_thresholds(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("carhop", help="Able-Baker drive-in case study")
    p.add_argument("--mode", choices=["I", "II"], default="I")
    p.add_argument("--pooled-mean", type=float, default=3.329)
    p.add_argument("--pool-from-seed", type=int, default=None,
                   help="Pool a fresh case I realization with this seed (implies mode II)")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--customers", type=int, default=200)
    p.add_argument("--audit", default=None, help="Per-event CSV of replication 1")
    p.add_argument("--per-rep", action="store_true", help="Include per-replication metrics")
    _add_common(p)
    p.set_defaults(func=cmd_carhop)

    return parser


def _options(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level)
    manifest = RunManifest(subcommand=args.command, options=_options(args), seeds=[args.seed])
    code = EXIT_INVARIANT
    try:
        code = args.func(args, manifest)
    except InvariantViolation as e:
        logger.error(f"internal invariant violated: {e}")
        code = EXIT_INVARIANT
    except (SegpointError, ValidationError, ValueError) as e:
        logger.error(str(e))
        code = EXIT_INVALID
    except OSError as e:
        logger.error(f"I/O error: {e.filename or ''} {e.strerror or e}")
        code = EXIT_IO
    except Exception:
        logger.exception("unexpected failure")
        code = EXIT_INVARIANT
    finally:
        manifest.finish(code)
        try:
            emit_manifest(manifest, args.manifest)
        except OSError as e:
            logger.error(f"could not write manifest {args.manifest}: {e}")
            code = EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
