"""Command-line entry point.

Exit codes: 0 ok, 2 invalid instance, 3 unreadable input, 4 budget refusal,
5 no equilibrium found, 6 internal error. Summaries go to stdout; artifacts
are written only to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .equilibria import BudgetExceeded, NoEquilibrium
from .model import (InstanceFormatError, InvalidInstance, check_instance, load_instance,
                    policy_from_dict, validate_instance)
from .optimizer import SolverConfig, separable_gap_check, solve_gamma_hat, solve_gamma_star
from .simulator import (NoConditioningMass, TypicalityConfig, default_config,
                        empirical_belief_divergence, error_event_frequencies, make_source,
                        run_sweep, simulate_traces, stagewise_block_game, sweep_csv)

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_BUDGET, EXIT_NO_EQ, EXIT_INTERNAL = 0, 2, 3, 4, 5, 6
VARIANTS = {"q0": "Q0", "qhat0": "Qhat0", "qtilde0": "Qtilde0"}
COMMANDS = ("validate", "solve", "bounds", "simulate", "sweep", "check-separable")


class UsageError(ValueError):
    pass


def _floats(text: str, count: int | None = None) -> tuple:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {count} numbers, got {len(values)}")
    return values


def _rates(text):
    return _floats(text, 3)


def _ints(text):
    try:
        values = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("blocklengths must be >= 1")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwpersuasion",
                                description="Strategic Gray-Wyner coding: solvers and simulator.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--out", help="artifact path (JSON, or CSV for sweep)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rates", type=_rates, help="R0,R1,R2 (overrides the file)")
    p.add_argument("--n-list", type=_ints, help="blocklengths, e.g. 50,100,200")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--restarts", type=int, help="optimizer restarts")
    p.add_argument("--eq-budget", type=int, help="pure-profile enumeration budget")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="q0")
    p.add_argument("--policy", help="policy JSON for simulate/sweep (default: the solved policy)")
    p.add_argument("--delta", type=float, help="typicality slack (default: blocklength schedule)")
    return p


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write(path, text: str):
    Path(path).write_text(text, encoding="utf-8")


def _solver_config(args) -> SolverConfig:
    cfg = SolverConfig(seed=args.seed, variant=VARIANTS[args.variant])
    if args.restarts is not None:
        cfg = replace(cfg, restarts=args.restarts)
    if args.eq_budget is not None:
        cfg = replace(cfg, eq_budget=args.eq_budget)
    return cfg


def _load(args):
    instance = load_instance(args.instance)
    if args.rates is not None:
        instance = instance.with_rates(args.rates)
    return instance


def _policy(args, instance, cfg):
    if args.policy:
        try:
            doc = json.loads(Path(args.policy).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InstanceFormatError(f"cannot read policy {args.policy}: {exc}") from None
        return policy_from_dict(doc.get("policy", doc), instance.alphabet_u), None
    star = solve_gamma_star(instance, cfg)
    return star.policy, star.value


def cmd_validate(args) -> int:
    instance = _load(args)
    problems = validate_instance(instance)
    for v in problems:
        print(f"violation: {v}")
    if args.out:
        _write(args.out, _dump({"valid": not problems, "violations": [str(v) for v in problems]}))
    if problems:
        return EXIT_INVALID
    print("instance is valid")
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = check_instance(_load(args))
    result = solve_gamma_star(instance, _solver_config(args))
    print(f"gamma_star = {result.value!r} ({result.eq_method}, certified: {result.certified})")
    if args.out:
        _write(args.out, _dump(result.to_dict()))
    return EXIT_OK


def cmd_bounds(args) -> int:
    instance = check_instance(_load(args))
    cfg = _solver_config(args)
    star = solve_gamma_star(instance, replace(cfg, variant="Q0"))
    hat = solve_gamma_hat(instance, cfg, star=star)
    doc = {"gamma_hat": hat.value, "gamma_star": star.value, "gap": star.value - hat.value}
    print(_dump(doc), end="")
    if args.out:
        _write(args.out, _dump(doc))
    return EXIT_OK


def cmd_simulate(args) -> int:
    instance = check_instance(_load(args))
    if not args.n_list or len(args.n_list) != 1:
        raise UsageError("simulate needs exactly one blocklength in --n-list")
    n = args.n_list[0]
    cfg = _solver_config(args)
    policy, gamma_star = _policy(args, instance, cfg)
    config = TypicalityConfig(args.delta) if args.delta else default_config(instance, policy, n=n)
    source = make_source(instance, policy, config, n, args.seed, instance.rates)
    traces = simulate_traces(source, config, args.trials, args.seed)
    events = error_event_frequencies(traces)
    try:
        beliefs = empirical_belief_divergence(source, instance, config, args.trials, args.seed,
                                              traces=traces).to_dict()
    except NoConditioningMass as exc:
        beliefs = {"error": str(exc)}
    block = stagewise_block_game(source, instance, config, args.trials, args.seed, cfg.eq_budget)
    doc = {"n": n, "delta": config.delta, "source": type(source).__name__,
           "rates": list(source.rates.as_tuple()), "gamma_star_ref": gamma_star,
           "error_events": events.to_dict(), "beliefs": beliefs, "block_game": block.to_dict()}
    print(f"n={n}: p_f0={events.p_f0!r} block_cost={block.block_encoder_cost!r}")
    if args.out:
        _write(args.out, _dump(doc))
    return EXIT_OK


def cmd_sweep(args) -> int:
    instance = check_instance(_load(args))
    if not args.n_list:
        raise UsageError("sweep needs --n-list")
    policy, gamma_star = _policy(args, instance, _solver_config(args))
    rows = run_sweep(instance, policy, args.n_list, args.trials, args.seed, instance.rates,
                     args.delta, gamma_star)
    text = sweep_csv(rows)
    print(text, end="")
    if args.out:
        _write(args.out, text)
    return EXIT_OK


def cmd_check_separable(args) -> int:
    instance = check_instance(_load(args))
    doc = separable_gap_check(instance, _solver_config(args))
    print(_dump(doc), end="")
    if args.out:
        _write(args.out, _dump(doc))
    return EXIT_OK


HANDLERS = {"validate": cmd_validate, "solve": cmd_solve, "bounds": cmd_bounds,
            "simulate": cmd_simulate, "sweep": cmd_sweep, "check-separable": cmd_check_separable}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        return HANDLERS[args.command](args)
    except InvalidInstance as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (InstanceFormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NoEquilibrium as exc:
        print(f"no equilibrium: {exc}", file=sys.stderr)
        return EXIT_NO_EQ
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
