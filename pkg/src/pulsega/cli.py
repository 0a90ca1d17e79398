"""Command-line entry point.

Values resolve in order: built-in defaults, then ``--config`` file (a path or
the bundled preset names ``short``/``long``), then explicit flags.
Exit codes: 0 success, 1 argument/configuration errors, 2 runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import ExperimentConfig, config_from_dict, config_to_dict, load_config, run_experiment

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsega", description="Pulse-level error mitigation experiments")
    parser.add_argument("--config", help="config JSON path, or a bundled preset name (short, long)")
    parser.add_argument("--algorithm", choices=("deutsch-jozsa", "grover"))
    parser.add_argument("--qubits", type=int, help="total qubit count (Deutsch-Jozsa includes the ancilla)")
    parser.add_argument("--population", type=int)
    parser.add_argument("--generations", type=int)
    parser.add_argument("--t1", type=float)
    parser.add_argument("--t2", type=float)
    parser.add_argument("--p-bit-flip", type=float)
    parser.add_argument("--p-phase-flip", type=float)
    parser.add_argument("--p-bit-phase-flip", type=float)
    parser.add_argument("--p-depolarizing", type=float)
    parser.add_argument("--seed", type=int, help="master seed of the optimizer")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--output-dir")
    parser.add_argument("--early-stop-rounds", type=int)
    parser.add_argument("--diversity-threshold", type=float)
    parser.add_argument("--diversity-action", choices=("mutate", "replace"))
    return parser


_NOISE_FLAGS = {
    "t1": "t1",
    "t2": "t2",
    "p_bit_flip": "p_bit_flip",
    "p_phase_flip": "p_phase_flip",
    "p_bit_phase_flip": "p_bit_phase_flip",
    "p_depolarizing": "p_depolarizing",
}
_GA_FLAGS = {
    "population": "population_size",
    "generations": "generations",
    "seed": "master_seed",
    "early_stop_rounds": "early_stop_rounds",
    "diversity_threshold": "diversity_threshold",
    "diversity_action": "diversity_action",
}
_TOP_FLAGS = {
    "algorithm": "algorithm",
    "qubits": "n_qubits",
    "workers": "workers",
    "output_dir": "output_dir",
}


def merge_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    data = config_to_dict(cfg)
    for flag, key in _TOP_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    for flag, key in _NOISE_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            data["noise"][key] = value
    for flag, key in _GA_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            data["ga"][key] = value
    return config_from_dict(data)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = merge_config(args)
    except (ValueError, TypeError, OSError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        result = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("experiment failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(result.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
