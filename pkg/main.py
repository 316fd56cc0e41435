#!/usr/bin/env python3
import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from core import get_logger
from core.config import COMMAND_PRESETS, OPERATOR_NAMES, load_experiment_config
from core.errors import CbsaError
from core.experiments import RUNNERS, ExperimentResult
from core.traces import write_csv, write_json

logger = get_logger("cli")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Contract-and-broadcast self-attention experiments")
    parser.add_argument("command", choices=sorted(COMMAND_PRESETS), help="Experiment to run")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--config", help="KEY=VALUE config file")
    parser.add_argument("--out", help="Output path, '-' for stdout")
    parser.add_argument("--epsilon", type=float, help="Coding-rate precision")
    parser.add_argument("--kappa", type=float, help="Residual step size; negative de-compresses")
    parser.add_argument("--layers", type=int, help="Layers stacked by trace-coding-rate")
    parser.add_argument("--op", choices=OPERATOR_NAMES, help="Operator applied by each residual step")
    parser.add_argument("--fig5-mode", action="store_true", default=None,
                        help="Pin kappa to 1 and check the token/representative co-trend")
    return parser.parse_args(argv)


def write_result(result: ExperimentResult, path: str) -> None:
    if result.header:
        write_csv(result.rows, result.header, path)
    else:
        write_json(result.summary, path)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = parse_args(argv)
    overrides = {
        "seed": args.seed,
        "epsilon": args.epsilon,
        "kappa": args.kappa,
        "layers": args.layers,
        "op": args.op,
        "fig5_mode": args.fig5_mode,
        "output_path": args.out,
    }
    try:
        cfg = load_experiment_config(args.command, args.config, overrides)
        logger.info(f"{args.command}: seed={cfg.seed} epsilon={cfg.epsilon} kappa={cfg.kappa} op={cfg.op}")
        result = RUNNERS[args.command](cfg)
        write_result(result, cfg.output_path)
    except CbsaError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"cannot write {e.filename or 'output'}: {e.strerror or e}")
        return EXIT_ERROR

    if not result.passed:
        logger.error(f"{args.command}: in-command checks failed")
        return EXIT_CHECK_FAILED
    logger.info(f"{args.command}: all checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
