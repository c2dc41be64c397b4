#!/usr/bin/env python3
"""
Linear Message-Passing Lab

Experiments on over-smoothing, rank collapse, multi-relational splits,
localized MIMO graph convolutions and PPR-style infinite-depth propagation.
Every command writes CSV/JSON artifacts for offline plotting.

Usage:
    python main.py <command> [--config PATH] [--seed N] [--out DIR] [--quiet]

    Commands:
        filters, decay, sca, split, lmgc-probe, pprgnn, train-synthetic, fit-target

    Options:
        --config PATH    JSON run config merged over the command defaults
        --seed N         Base seed; configured seeds become N, N+1, ...
        --out DIR        Artifact directory (default: results)
        --quiet          Only warnings and errors on the console

Configuration:
    Set environment variables in .env file:
    - LOG_LEVEL for logging verbosity (DEBUG, INFO, WARNING, ERROR, CRITICAL)
    - LOG_TO_FILE to enable file logging (true/false)
    - MPLAB_MAX_DENSE to raise the cap on vectorized operator size

Exit codes: 0 success, 1 a numerical identity failed, 2 bad config or input.
"""

import argparse
import sys

from dotenv import load_dotenv
from rich.console import Console

# Load environment variables before the config module reads them
load_dotenv()

from src.errors import VerificationError  # noqa: E402
from src.experiment_runner import ExperimentRunner  # noqa: E402
from src.logger import get_logger  # noqa: E402
from src.run_config import COMMANDS  # noqa: E402


def parse_arguments(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        description="Linear Message-Passing Lab",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python main.py sca                              # SCA ratios on K3
    python main.py decay --seed 3 --out runs/decay  # 96-iteration traces on the karate club
    python main.py pprgnn --config pprgnn.json      # PPRGNN forward pass and gradient check
        """
    )

    parser.add_argument('command', choices=COMMANDS, help='Experiment to run')
    parser.add_argument('--config', default=None, help='JSON run config (default: built-in defaults)')
    parser.add_argument('--seed', type=int, default=None, help='Base seed (default: from config, else 0)')
    parser.add_argument('--out', default=None, help='Output directory for artifacts (default: results)')
    parser.add_argument('--quiet', action='store_true', help='Suppress tables and info logs')

    return parser.parse_args(argv)


def main(argv=None) -> int:
    """Main entry point; returns the process exit code"""
    args = parse_arguments(argv)
    errors = Console(stderr=True, soft_wrap=True)

    try:
        runner = ExperimentRunner(args.command, config_path=args.config, seed=args.seed, out_dir=args.out,
                                  quiet=args.quiet)
    except Exception as e:
        errors.print(f"Error: {e}", markup=False)
        return 2

    logger = get_logger("main")
    try:
        runner.run()
    except VerificationError as e:
        logger.error(f"Verification failed: {e}", exc_info=True)
        errors.print(f"Verification failed: {e}", markup=False)
        return 1
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"Invalid input: {e}", exc_info=True)
        errors.print(f"Error: {e}", markup=False)
        return 2
    except KeyboardInterrupt:
        errors.print("\nShutdown requested by user...", markup=False)
        return 130
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        errors.print(f"Error: {e}", markup=False)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
