"""
Regenerate the accuracy and precision tables for both detectors.

This script:
1. Calibrates a threshold profile per detector (or loads one with --thresholds)
2. Runs the full R x delta grid for the clustering and likelihood ratio detectors
3. Writes accuracy/precision tables and a JSON bundle per detector under --out
"""

import sys
from pathlib import Path

#
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from config.settings import settings
from detection.calibration import calibrate_cluster, calibrate_lrt
from experiments.bench import ExperimentGrid, run_grid
from experiments.reports import write_report
from storage.profiles import load_profile, save_profile

DETECTORS = {
    "cluster": {"variant": "agglomerative", "transform": "auto"},
    "cluster-divisive": {"variant": "divisive", "transform": "auto"},
    "cluster-raw": {"variant": "agglomerative", "transform": "off"},
    "lrt": {},
}


def profile_for(name: str, m: int, seed: int, reps: int, threads: int, thresholds_dir: Path = None):
    """
    Load or calibrate the threshold profile for one detector configuration.

    Args:
        name: Key of DETECTORS
        m: Series length
        seed: Master seed
        reps: Null series used for calibration
        threads: Worker processes
        thresholds_dir: Directory with <name>.json profiles to reuse

    Returns:
        ThresholdProfile
    """
    if thresholds_dir is not None and (thresholds_dir / f"{name}.json").exists():
        return load_profile(thresholds_dir / f"{name}.json")

    options = DETECTORS[name]
    g = settings.max_changes
    alphas = settings.alphas[:g]
    if name.startswith("cluster"):
        return calibrate_cluster(m, g, alphas, reps=reps, sets=1, rng_seed=seed,
                                 transform_eta=options["transform"], variant=options["variant"],
                                 threads=threads)
    return calibrate_lrt(m, g, alphas, reps=reps, rng_seed=seed,
                         elrt_runs=settings.elrt_runs, threads=threads)


def reproduce(name: str, out: Path, scale: float, seed: int, calibration_reps: int,
              threads: int, thresholds_dir: Path = None):
    """Run one detector configuration over the full grid and write its tables."""
    print(f"\n{'='*60}")
    print(f"Detector: {name}")
    print(f"{'='*60}\n")

    profile = profile_for(name, 200, seed, calibration_reps, threads, thresholds_dir)
    save_profile(profile, out / name / "thresholds.json")
    print(f"Thresholds: {[round(h, 4) for h in profile.thresholds]}")

    options = DETECTORS[name]
    grid = ExperimentGrid(
        method="cluster" if name.startswith("cluster") else "lrt",
        reps=ExperimentGrid.reps_for_scale(scale),
        thresholds=profile,
        seed=seed,
        elrt_runs=settings.elrt_runs,
        **options,
    )
    report = run_grid(grid, threads=threads)
    paths = write_report(report, out / name)
    for artifact, path in paths.items():
        print(f"  {artifact}: {path}")


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(
        description="Regenerate accuracy and precision tables for every detector configuration"
    )
    parser.add_argument(
        "detector",
        nargs="?",
        default=None,
        help=f"Detector to run. Options: {list(DETECTORS.keys())}. "
             f"If not specified, runs all of them."
    )
    parser.add_argument("--out", type=Path, default=Path("results"), help="Output directory")
    parser.add_argument("--scale", type=float, default=0.1,
                        help="Fraction of 1000 replications per cell (default: 0.1)")
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--calibration-reps", type=int, default=settings.auto_calibration_reps)
    parser.add_argument("--threads", type=int, default=settings.threads)
    parser.add_argument("--thresholds", type=Path, default=None,
                        help="Directory holding <detector>.json profiles to reuse")
    parser.add_argument(
        "--list",
        action="store_true",
        help="List detector configurations and exit"
    )

    args = parser.parse_args()

    if args.list:
        print("Detector configurations:")
        for key, options in DETECTORS.items():
            print(f"  {key}: {options}")
        sys.exit(0)

    names = [args.detector] if args.detector else list(DETECTORS)
    for name in names:
        if name not in DETECTORS:
            print(f"Error: Unknown detector '{name}'")
            print(f"Available detectors: {list(DETECTORS.keys())}")
            sys.exit(2)
        reproduce(name, args.out, args.scale, args.seed, args.calibration_reps,
                  args.threads, args.thresholds)
