import sys
import time
from pathlib import Path

from nfp_assoc.cli import main

# Base directory setup
BASE_DIR = Path(__file__).parent


def print_header(step_num, description):
    """Print a formatted header for each step"""
    print("\n" + "=" * 80)
    print(f"STEP {step_num}: {description}")
    print("=" * 80)


def run_step(argv, ignore_errors=False):
    """Run one CLI command in-process and handle a nonzero exit"""
    print(f"Running: {' '.join(argv)}")
    code = main(argv)
    if code != 0:
        print(f"Error: step exited with status {code}")
        if not ignore_errors:
            print("Pipeline stopped due to error. Fix the issue and try again.")
            sys.exit(code)
        return False
    return True


def ensure_directories():
    """Create necessary directories if they don't exist"""
    dirs = [
        BASE_DIR / "data",
        BASE_DIR / "output",
        BASE_DIR / "input",
    ]

    for directory in dirs:
        directory.mkdir(exist_ok=True, parents=True)
        print(f"Ensured directory exists: {directory}")


def run_association_pipeline():
    """Reproduce the snapshot, both sweeps and the timing comparison"""
    start_time = time.time()

    ensure_directories()

    defaults_cfg = BASE_DIR / "input/urban_defaults.json"
    snapshot_cfg = BASE_DIR / "input/snapshot.json"
    scenario_json = BASE_DIR / "data/scenario_0.json"

    # STEP 1: Generate a scenario with the urban defaults
    print_header(1, "Generate scenario")
    run_step(["generate", "--config", str(defaults_cfg), "--out", str(scenario_json)])

    # STEP 2: Solve it with all three solvers and dump the snapshot
    print_header(2, "Associate small cells (all solvers)")
    run_step(["solve", "--config", str(snapshot_cfg), "--scenario", str(scenario_json),
              "--out", str(BASE_DIR / "output/association.csv"),
              "--snapshot", str(BASE_DIR / "output/snapshot.csv")])

    # STEP 3: Unassociated SCs vs backhaul ratio
    print_header(3, "Rate-ratio sweep")
    run_step(["sweep", str(BASE_DIR / "input/rate_sweep.json"),
              "--out", str(BASE_DIR / "output/rate_ratio.csv")], ignore_errors=True)

    # STEP 4: Unassociated SCs vs bandwidth ratio
    print_header(4, "Bandwidth-ratio sweep")
    run_step(["sweep", str(BASE_DIR / "input/bandwidth_sweep.json"),
              "--out", str(BASE_DIR / "output/bandwidth_ratio.csv")], ignore_errors=True)

    # STEP 5: Solver run times
    print_header(5, "Run-time comparison")
    run_step(["sweep", str(BASE_DIR / "input/timing.json"),
              "--out", str(BASE_DIR / "output/timing.csv")], ignore_errors=True)

    elapsed_time = time.time() - start_time
    print("\n" + "=" * 80)
    print(f"ASSOCIATION PIPELINE COMPLETED in {elapsed_time:.2f} seconds!")
    print(f"Results: {BASE_DIR / 'output'}")
    print("=" * 80)


if __name__ == "__main__":
    try:
        # With arguments this is the plain CLI; without, the full pipeline.
        if len(sys.argv) > 1:
            sys.exit(main(sys.argv[1:]))
        run_association_pipeline()
    except KeyboardInterrupt:
        print("\nAssociation pipeline interrupted by user.")
        sys.exit(130)
    except Exception as e:
        print(f"\nError in association pipeline: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
