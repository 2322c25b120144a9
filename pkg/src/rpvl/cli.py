"""Command-line entry point ``rpvl``.

Exit status is 0 on success, 2 for usage errors (bad flags or invalid
settings) and 1 when a run fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from rpvl.core import UncertaintySpec
from rpvl.experiments import (
    COMMANDS,
    DEFAULT_SEEDS,
    ExperimentConfig,
    csv_text,
    emit_csv,
    run_sweep,
)
from rpvl.gamblers import GamblersConfig, perturb
from rpvl.io import load_model, load_solution, save_json, solution_to_dict
from rpvl.planner import evaluate_robust, robust_dp, rpvl
from rpvl.sampling import GenerativeModel, SampleBudget

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _list_of(kind):
    def parse(text: str):
        items = [t for t in text.replace(" ", "").split(",") if t]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        try:
            return [kind(t) for t in items]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} list: {text!r}") from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rpvl", description="Robust planning and learning for tabular finite-horizon MDPs.")
    parser.add_argument("command", choices=COMMANDS)
    env = parser.add_mutually_exclusive_group()
    env.add_argument("--env", choices=["gamblers"], default=None, help="built-in environment (default)")
    env.add_argument("--model", metavar="FILE", help="model JSON file")
    parser.add_argument(
        "--divergence",
        action="append",
        choices=["tv", "chi2", "kl", "wasserstein"],
        help="ambiguity set (repeatable)",
    )
    parser.add_argument("--rho", type=_list_of(float), help="comma-separated radii")
    parser.add_argument("--n", type=_list_of(int), help="comma-separated samples per (h, s, a)")
    parser.add_argument("--test-p", type=_list_of(float), help="comma-separated test heads probabilities")
    parser.add_argument("--train-p", type=float, default=0.6, help="training heads probability")
    parser.add_argument("--seed", type=_list_of(int), help="comma-separated seeds")
    parser.add_argument("--wasserstein-p", type=int, default=1, help="Wasserstein order")
    parser.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    parser.add_argument("--tol", type=float, default=1e-9, help="dual search tolerance")
    parser.add_argument("--goal", type=int, default=50, help="gamblers goal balance")
    parser.add_argument("--horizon", type=int, default=50, help="gamblers horizon")
    parser.add_argument("--policy", metavar="FILE", help="solution JSON for evaluate")
    parser.add_argument("--timing", action="store_true", help="record wall-clock time in the CSV")
    parser.add_argument("--no-sidecar", action="store_true", help="skip the per-state JSON next to the CSV")
    return parser


def _config(args) -> ExperimentConfig:
    sweep = args.command.startswith("sweep")
    if args.divergence is not None and not args.divergence:
        raise UsageError("at least one --divergence is required")
    if sweep and not args.divergence:
        raise UsageError("at least one --divergence is required")
    model = load_model(args.model) if args.model else None
    kwargs = dict(
        command=args.command,
        divergences=tuple(args.divergence or ()) or ("tv",),
        rhos=tuple(args.rho or (0.2,)),
        ns=tuple(args.n or (100,)),
        test_ps=tuple(args.test_p or ()),
        seeds=tuple(args.seed or DEFAULT_SEEDS),
        train_p=args.train_p,
        wasserstein_p=args.wasserstein_p,
        tol=args.tol,
        model=model,
        gamblers=GamblersConfig(goal=args.goal, horizon=args.horizon, heads_prob=args.train_p),
        timing=args.timing,
    )
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _single(values, flag):
    if values is not None and len(values) != 1:
        raise UsageError(f"--{flag} takes a single value for this command")
    return values[0] if values else None


def _spec(cfg: ExperimentConfig, args) -> Optional[UncertaintySpec]:
    """Single ambiguity set for solve-type commands; ``None`` means nominal."""
    if not args.divergence:
        return None
    if len(args.divergence) != 1:
        raise UsageError("this command takes exactly one --divergence")
    rho = _single(args.rho, "rho")
    rho = 0.2 if rho is None else rho
    if rho == 0:
        return None
    return cfg.spec(cfg.divergences[0], rho)


def _emit_json(obj, out) -> None:
    if out:
        save_json(obj, out)
    else:
        sys.stdout.write(json.dumps(obj) + "\n")


def _solve(cfg, args):
    spec = _spec(cfg, args)
    plan = robust_dp(cfg.truth(), spec, cfg.solver)
    obj = solution_to_dict(plan.policy, plan.values)
    obj["win_prob_avg"] = cfg.win_average(plan.values.first())
    _emit_json(obj, args.out)


def _sample_solve(cfg, args):
    spec = _spec(cfg, args)
    n = _single(args.n, "n") or 100
    seed = _single(args.seed, "seed")
    seed = 0 if seed is None else seed
    plan = rpvl(GenerativeModel(cfg.truth(), seed), SampleBudget(n), spec, cfg.solver)
    obj = solution_to_dict(plan.policy, plan.values)
    obj.update(N=n, seed=seed, evaluations=plan.total_evaluations)
    _emit_json(obj, args.out)


def _evaluate(cfg, args):
    if not args.policy:
        raise UsageError("evaluate needs --policy FILE")
    spec = _spec(cfg, args)
    policy, _ = load_solution(args.policy)
    model = cfg.truth()
    if args.test_p:
        if args.model:
            raise UsageError("--test-p applies to the gamblers environment only")
        model = perturb(cfg.gamblers_cfg, _single(args.test_p, "test-p"))
    try:
        values = evaluate_robust(policy, model, spec, cfg.solver)
    except ValueError as exc:
        raise UsageError(f"policy does not fit the model: {exc}") from None
    _emit_json({"values": values.values.tolist(), "win_prob_avg": cfg.win_average(values.first())}, args.out)


def _sweep(cfg, args):
    result = run_sweep(cfg)
    if args.out:
        emit_csv(result, args.out, sidecar=not args.no_sidecar)
    else:
        sys.stdout.write(csv_text(result))


HANDLERS = {"solve": _solve, "sample-solve": _sample_solve, "evaluate": _evaluate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        HANDLERS.get(args.command, _sweep)(cfg, args)
    except UsageError as exc:
        print(f"rpvl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"rpvl: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
