"""Command-line interface.

Subcommands: grow / marginal / prune (tree artifacts as JSON), crp
(trajectory CSV), verify (identity suites; exit 1 names the failing
invariant), experiment (harness runs; CSV + summary JSON).

All randomness derives from --seed; replicate streams are (seed, index), so
rerunning with more replicates leaves earlier replicates unchanged.  Floats
are serialized with 17 significant digits so values round-trip exactly.
Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analytics, crp, harness, marginals, rng as rngmod, treegrow, verify


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_or_grow(args) -> treegrow.GrowingTree:
    if getattr(args, "infile", None):
        with open(args.infile) as fh:
            return treegrow.tree_from_json(fh.read())
    tree = treegrow.new_tree(args.k)
    return treegrow.grow_to(tree, args.n, rngmod.replicate_stream(args.seed, 0))


def cmd_grow(args) -> int:
    tree = _load_or_grow(args)
    _write(args.out, treegrow.tree_to_json(tree) + "\n")
    return 0


def cmd_marginal(args) -> int:
    tree = _load_or_grow(args)
    mt = marginals.marginal_tree(tree, args.p)
    _write(args.out, _json_dumps(marginals.marginal_to_obj(mt)))
    return 0


def cmd_prune(args) -> int:
    tree = _load_or_grow(args)
    pruned, count = treegrow.prune_labels(tree, args.kprime)
    obj = {"retained_internal": count, "tree": treegrow.tree_to_obj(pruned)}
    _write(args.out, _json_dumps(obj))
    return 0


def cmd_crp(args) -> int:
    rng = rngmod.replicate_stream(args.seed, 0)
    _, hist = crp.crp_run(args.alpha, args.theta, args.steps, rng)
    _write(args.out, crp.trajectory_csv(hist))
    return 0


def cmd_verify(args) -> int:
    suite = verify.SUITES[args.suite]
    kwargs = {"k": args.k, "nmax": args.nmax, "seed": args.seed,
              "samples": args.samples}
    checks = suite(**{k: v for k, v in kwargs.items() if v is not None})
    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"[{'pass' if ok else 'FAIL'}] {name}: {detail}")
    if failed:
        print(f"verification failed: {failed[0]}", file=sys.stderr)
        return 1
    return 0


def cmd_experiment(args) -> int:
    spec = harness.ExperimentSpec(
        kind=args.kind,
        k=args.k,
        kprime=args.kprime,
        n=args.n,
        n_grid=tuple(args.grid) if args.grid else None,
        replicates=args.reps,
        seed=args.seed,
        test_function=args.test_function,
        mc_samples=args.samples,
    )
    result = harness.run_experiment(spec)
    base = args.out
    _write(base + ".csv", result.csv_text)
    _write(base + ".json", _json_dumps(result.summary_obj()))
    for rep in result.reports:
        print(f"{rep.statistic}: mean={rep.sample_mean:.6g} "
              f"target={rep.target:.6g} z={rep.z_score:+.2f}")
    return 0


def _add_tree_source(p: argparse.ArgumentParser, need_n=True):
    p.add_argument("--k", type=int, help="arity (>= 2)")
    if need_n:
        p.add_argument("--n", type=int, help="growth steps")
    p.add_argument("--seed", type=int, help="RNG seed (required unless --in)")
    p.add_argument("--in", dest="infile", help="read a tree JSON instead of growing")
    p.add_argument("--out", default="-", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="karytrees",
                                 description="k-ary growing trees toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grow", help="grow a tree and emit its JSON")
    _add_tree_source(p)
    p.set_defaults(fn=cmd_grow)

    p = sub.add_parser("marginal", help="emit the order-p marginal tree JSON")
    _add_tree_source(p)
    p.add_argument("--p", type=int, required=True)
    p.set_defaults(fn=cmd_marginal)

    p = sub.add_parser("prune", help="emit the label-pruned tree and its size")
    _add_tree_source(p)
    p.add_argument("--kprime", type=int, required=True)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("crp", help="run a restaurant process; trajectory CSV")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_crp)

    p = sub.add_parser("verify", help="run an identity suite; exit 1 on failure")
    p.add_argument("suite", choices=sorted(verify.SUITES))
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--nmax", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200_000)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("experiment", help="run a harness experiment")
    p.add_argument("kind", choices=harness.EXPERIMENT_KINDS)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kprime", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--grid", type=int, nargs="+")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--test-function", dest="test_function")
    p.add_argument("--samples", type=int, default=10 ** 6)
    p.add_argument("--out", required=True, help="output prefix (.csv/.json)")
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("grow", "marginal", "prune") and not args.infile:
        if args.k is None or getattr(args, "n", None) is None or args.seed is None:
            print("error: --k, --n and --seed are required unless --in is given",
                  file=sys.stderr)
            return 2
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
