"""Command-line entry point: ``lobc <command> [flags]``."""

from __future__ import annotations

import argparse
import sys

from .engine import LocalityError, OwnershipError
from .harness import COMMANDS, PROTOCOLS, ConfigError, ExperimentConfig, execute, parse_angles, write_report
from .protocols import OracleDisagreement

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ORACLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lobc", description="Simulate and check nonlocal gate protocols.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--gate", help="identity, cnot, cz, swap, iswap, haar:<seed> or a,b,c")
    p.add_argument("--angles", type=parse_angles, help="a,b,c in radians")
    p.add_argument("--rounds", "-N", type=int, default=1)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("sample", "enumerate"))
    p.add_argument("--dA", type=int, default=2)
    p.add_argument("--dB", type=int, default=2)
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--inputs", type=int, default=16, help="number of random input states")
    p.add_argument("--state", choices=("eta", "bell", "random"), help="state for the entanglement command")
    p.add_argument("--epsilon", type=float, help="target error for the bounds command")
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    p.add_argument("--max-branches", type=int, default=1 << 20)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def config_from_args(argv=None) -> ExperimentConfig:
    a = build_parser().parse_args(argv)
    return ExperimentConfig(
        command=a.command, protocol=a.protocol, gate=a.gate, angles=a.angles, rounds=a.rounds,
        trials=a.trials, mode=a.mode, seed=a.seed, dA=a.dA, dB=a.dB, s=a.s, d=a.d, inputs=a.inputs,
        state=a.state, epsilon=a.epsilon, out=a.out, format=a.format, workers=a.workers,
        max_branches=a.max_branches,
    )


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        report = execute(cfg)
        text = write_report(report, cfg.out, cfg.format)
    except OracleDisagreement as e:
        print(f"oracle disagreement: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except (ConfigError, ValueError, LocalityError, OwnershipError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if not cfg.out:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
