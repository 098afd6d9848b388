"""Command-line entry point: run, sweep, oracle, check-assumptions, plot.

Exit codes: 0 success, 1 configuration or usage error, 2 divergence
(partial CSV kept), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import oracles
from ..driver import prepare, run_functional_ac
from ..errors import ConfigError, Diverged, FuncacError, IoError, SchemaMismatch
from ..mdp import BehaviorPolicy, FiniteMdp, stationary_distribution
from ..policy import TabularSoftmaxPolicy
from .io import load_config, write_log
from .plot import emit_plot

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

ORACLES = ("V", "Q", "J", "grad", "grad_emphatic", "emphasis", "d_mu")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="funcac", description="Functional actor-critic experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute one configured run and write its CSV log")
    run.add_argument("config")
    run.add_argument("--out", default=".", help="output directory (default: cwd)")

    sweep = sub.add_parser("sweep", help="run k seeds of a config and write a manifest")
    sweep.add_argument("config")
    sweep.add_argument("--seeds", type=int, required=True)
    sweep.add_argument("--out", default=".")
    sweep.add_argument("--jobs", type=int, default=1, help="concurrent runs (default 1)")

    orc = sub.add_parser("oracle", help="exact dynamic-programming quantities as JSON")
    orc.add_argument("what", choices=ORACLES)
    orc.add_argument("mdp")
    orc.add_argument("theta")
    orc.add_argument("--behavior", help="behavior policy JSON (default: uniform)")

    chk = sub.add_parser("check-assumptions", help="measure regularity constants for a config")
    chk.add_argument("config")
    chk.add_argument("--policies", type=int, default=8, help="number of sampled policies")

    plot = sub.add_parser("plot", help="SVG chart of one log column")
    plot.add_argument("col")
    plot.add_argument("csv", nargs="*")
    plot.add_argument("--out", required=True)
    plot.add_argument("--manifest", help="seed-group manifest drawn as mean +- std band")
    return p


def _stem(config_path) -> str:
    return os.path.splitext(os.path.basename(config_path))[0]


def _run_one(config, out_path):
    """Run and persist; returns ``(path, diverged_at)``."""
    try:
        log = run_functional_ac(config)
    except Diverged as exc:
        write_log(exc.log, out_path)
        return out_path, exc.t
    write_log(log, out_path)
    return out_path, None


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc.strerror}") from exc


def cmd_run(args) -> int:
    config = load_config(args.config)
    _ensure_dir(args.out)
    path = os.path.join(args.out, f"{_stem(args.config)}_seed{config.seed}.csv")
    path, diverged = _run_one(config, path)
    if diverged is not None:
        print(f"diverged at step {diverged}; partial log in {path}", file=sys.stderr)
        return EXIT_DIVERGED
    print(path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    base = load_config(args.config)
    _ensure_dir(args.out)
    jobs = []
    for i in range(args.seeds):
        cfg = base.with_seed(base.seed + i)
        jobs.append((cfg, os.path.join(args.out, f"{_stem(args.config)}_seed{cfg.seed}.csv")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(cfg, path) for cfg, path in jobs]
    manifest = os.path.join(args.out, f"{_stem(args.config)}_manifest.json")
    try:
        with open(manifest, "w") as f:
            json.dump([os.path.basename(p) for p, _ in results], f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest {manifest}: {exc.strerror}") from exc
    print(manifest)
    diverged = [(p, t) for p, t in results if t is not None]
    for p, t in diverged:
        print(f"diverged at step {t}; partial log in {p}", file=sys.stderr)
    return EXIT_DIVERGED if diverged else EXIT_OK


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg} at line {exc.lineno}") from None


def cmd_oracle(args) -> int:
    try:
        mdp = FiniteMdp.from_dict(_read_json(args.mdp))
        policy = TabularSoftmaxPolicy.from_dict(_read_json(args.theta))
        if args.behavior:
            mu = BehaviorPolicy.from_dict(_read_json(args.behavior))
        else:
            mu = BehaviorPolicy.uniform(mdp.n_states, mdp.n_actions)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FuncacError):
            raise
        raise ConfigError(f"malformed input: {exc}") from None
    if policy.theta.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError(f"theta shape {policy.theta.shape} does not match the MDP")
    what = args.what
    if what == "V":
        out = oracles.state_values(mdp, policy)
    elif what == "Q":
        out = oracles.q_values(mdp, policy)
    elif what == "J":
        out = oracles.objective(mdp, mu, policy)
    elif what == "grad":
        out = oracles.exact_gradient_chain(mdp, mu, policy)
    elif what == "grad_emphatic":
        out = oracles.exact_gradient_emphatic(mdp, mu, policy)
    elif what == "emphasis":
        out = oracles.emphasis_weights(mdp, mu, policy)
    else:
        out = stationary_distribution(mdp, mu)
    print(json.dumps({what: np.asarray(out).tolist()}))
    return EXIT_OK


def cmd_check(args) -> int:
    config = load_config(args.config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[1])
    mdp, mu, features, _, lam, *_, theta0, _ = prepare(config, rng)
    # a short random walk in parameter space so consecutive pairs probe Lipschitz constants
    thetas = [theta0]
    for _ in range(max(args.policies, 1) - 1):
        thetas.append(thetas[-1] + rng.normal(scale=0.5, size=theta0.shape))
    report = oracles.check_assumptions(mdp, mu, [TabularSoftmaxPolicy(t) for t in thetas], features, lam)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.csv and not args.manifest:
        raise ConfigError("plot needs CSV paths or --manifest")
    emit_plot(args.csv, args.col, args.out, manifest=args.manifest)
    print(args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "check-assumptions": cmd_check, "plot": cmd_plot}


def cli_main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SchemaMismatch as exc:
        # a malformed CSV or manifest is unreadable input, not a bad config
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FuncacError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
