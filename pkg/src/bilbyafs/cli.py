"""Command-line entry point.

Exit status: 0 when every check passes, 1 on a failed verdict, 2 on usage
or parse errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import codec
from .harness import DEFAULT_ALPHABET, FuzzConfig, check_against_oracle, check_trace, explore, fuzz
from .model import AfsState, fresh_state, lookup_path, updated_afs, vnode_from_inode
from .nondet import EnumBudget, enumerate_outcomes
from .ops import CreateResult, UnlinkResult, afs_create, afs_fsync, afs_lookup, afs_unlink
from .sim import BLANK_VNODE, FailureSchedule, ScriptError, ScriptOp, _decode_name, parse_script, run_script


class UsageError(Exception):
    pass


def pending2_fixture() -> AfsState:
    """Fresh state with two creates still buffered."""
    script = [ScriptOp("create", "/", b"a", 0o644), ScriptOp("create", "/", b"b", 0o644)]
    return run_script(script, capacity=4).steps[-1].post


FIXTURES = {"fresh": fresh_state, "pending2": pending2_fixture}


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def cmd_run(args) -> int:
    script = parse_script(_read(args.script))
    schedule = FailureSchedule.parse(_read(args.schedule)) if args.schedule else FailureSchedule()
    trace = run_script(script, schedule, args.capacity)
    text = codec.trace_text(trace)
    if args.trace:
        Path(args.trace).write_text(text)
    else:
        sys.stdout.write(text)
    verdict = check_trace(trace)
    if verdict.passed:
        verdict = check_against_oracle(trace)
    print(f"{len(trace)} steps: {verdict.describe()}", file=sys.stderr)
    return 0 if verdict.passed else 1


def cmd_check(args) -> int:
    try:
        trace = codec.parse_trace(_read(args.trace))
    except codec.DecodeError as e:
        raise UsageError(str(e)) from None
    verdict = check_trace(trace)
    print(f"{len(trace)} steps: {verdict.describe()}")
    if not verdict.passed:
        print(verdict.witness, end="")
    return 0 if verdict.passed else 1


def _capacities(text: str) -> tuple:
    try:
        caps = tuple(int(c) for c in text.split(",") if c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad capacity list {text!r}") from None
    if not caps:
        raise argparse.ArgumentTypeError("empty capacity list")
    return caps


def cmd_fuzz(args) -> int:
    try:
        config = FuzzConfig(seed=args.seed, num_scenarios=args.n, max_script_len=args.len,
                            capacities=args.capacities)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out_dir = Path(args.out) if args.out else None
    summary = fuzz(config, out_dir)
    text = summary.text()
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if summary.passed else 1


def cmd_explore(args) -> int:
    names = [n.encode() for n in args.names.split(",") if n]
    if names:
        alphabet = [("create", n) for n in names] + [("unlink", names[0]),
                                                     ("lookup", names[0]), ("fsync", b"")]
    else:
        alphabet = list(DEFAULT_ALPHABET)
    report = explore(fresh_state(), args.depth, alphabet, samples=args.samples)
    sys.stdout.write(report.text())
    return 0 if not report.violations else 1


def _load_state(args) -> AfsState:
    if args.state:
        try:
            return codec.parse_state(_read(args.state))
        except codec.DecodeError as e:
            raise UsageError(str(e)) from None
    return FIXTURES[args.fixture]()


def _outcome_text(o) -> str:
    if isinstance(o, CreateResult):
        return codec.dumps({"state": codec.state_obj(o.state), "vdir": codec.vnode_obj(o.vdir),
                            "vnode": codec.vnode_obj(o.vnode), "result": codec.result_obj(o.result)})
    if isinstance(o, UnlinkResult):
        return codec.dumps({"state": codec.state_obj(o.state), "vdir": codec.vnode_obj(o.vdir),
                            "result": codec.result_obj(o.result)})
    if isinstance(o, tuple):
        return codec.dumps({"state": codec.state_obj(o[0]), "result": codec.result_obj(o[1])})
    return codec.dumps({"result": codec.result_obj(o)})


def cmd_enumerate(args) -> int:
    state = _load_state(args)
    combined = updated_afs(state)
    op, rest = args.op, args.args

    def parent_and_name():
        if len(rest) < 2:
            raise UsageError(f"{op} needs <parent-path> <name>")
        parent = lookup_path(combined, rest[0])
        if parent is None or not parent.is_dir:
            raise UsageError(f"{rest[0]!r} is not a directory")
        return vnode_from_inode(parent), _decode_name(rest[1])

    if op == "fsync":
        if rest:
            raise UsageError("fsync takes no arguments")
        tree = afs_fsync(state)
    elif op == "create":
        vdir, name = parent_and_name()
        try:
            mode = int(rest[2], 16) if len(rest) > 2 else 0o644
        except ValueError:
            raise UsageError(f"bad mode {rest[2]!r}") from None
        tree = afs_create(state, vdir, name, mode, BLANK_VNODE)
    elif op == "unlink":
        vdir, name = parent_and_name()
        tree = afs_unlink(state, vdir, name)
    elif op == "lookup":
        vdir, name = parent_and_name()
        tree = afs_lookup(state, vdir, name)
    else:
        raise UsageError(f"unknown operation {op!r}")
    res = enumerate_outcomes(tree, EnumBudget(max_outcomes=args.max_outcomes,
                                              max_predicate_samples=args.budget))
    for o in res.values:
        print(_outcome_text(o))
    print(f"{len(res)} outcomes{' (truncated)' if res.truncated else ''}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bilbyafs",
                                description="Abstract file system model and refinement harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a script on the simulator and check it")
    r.add_argument("script")
    r.add_argument("--schedule")
    r.add_argument("--capacity", type=int, default=4)
    r.add_argument("--trace", help="write the trace here instead of stdout")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="check a recorded trace")
    c.add_argument("trace")
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("fuzz", help="seeded refinement fuzzing")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--n", type=int, default=1000)
    f.add_argument("--len", type=int, default=30)
    f.add_argument("--capacities", type=_capacities, default=(1, 2, 4, 8))
    f.add_argument("--out", help="directory for summary.txt and counterexamples")
    f.set_defaults(func=cmd_fuzz)

    e = sub.add_parser("explore", help="bounded exhaustive search of abstract states")
    e.add_argument("--depth", type=int, default=3)
    e.add_argument("--names", default="", help="comma separated names, e.g. a,b")
    e.add_argument("--samples", type=int, default=2)
    e.set_defaults(func=cmd_explore)

    n = sub.add_parser("enumerate", help="print the outcome set of one abstract call")
    n.add_argument("op", choices=("create", "unlink", "lookup", "fsync"))
    n.add_argument("args", nargs="*")
    n.add_argument("--budget", type=int, default=2, help="samples per predicate choice")
    n.add_argument("--max-outcomes", type=int, default=10_000)
    n.add_argument("--fixture", choices=sorted(FIXTURES), default="fresh")
    n.add_argument("--state", help="file holding a serialized state")
    n.set_defaults(func=cmd_enumerate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return args.func(args)
    except (UsageError, ScriptError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
