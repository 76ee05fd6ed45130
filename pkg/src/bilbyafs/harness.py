"""Refinement checking, fuzzing and bounded exploration.

A simulator step refines the abstract operation when its abstracted post
state and outputs are one of the outcomes the abstract operation admits
from the abstracted pre state.
"""

from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from . import codec
from .model import (
    ROOT_INO,
    AfsState,
    Error,
    ErrorCode,
    Success,
    check_invariant,
    entry_size,
    fresh_state,
    updated_afs,
    vnode_from_inode,
)
from .nondet import EnumBudget, contains, enumerate_outcomes
from .ops import (
    CreateResult,
    UnlinkResult,
    afs_create,
    afs_fsync,
    afs_lookup,
    afs_unlink,
)
from .sim import (
    BLANK_VNODE,
    AllocFail,
    FailureSchedule,
    FlushFail,
    FlushOk,
    OpCall,
    OpOutput,
    ScriptOp,
    Step,
    Trace,
    format_script,
    run_script,
)


class Reason(enum.Enum):
    NOT_IN_SPEC_SET = "NotInSpecSet"
    INVARIANT_VIOLATED = "InvariantViolated"
    ORACLE_MISMATCH = "OracleMismatch"
    DISCONTINUITY = "Discontinuity"


@dataclass(frozen=True)
class Verdict:
    passed: bool
    failing_step: Optional[int] = None
    reason: Optional[Reason] = None
    clauses: tuple = ()
    witness: str = ""

    def describe(self) -> str:
        if self.passed:
            return "pass"
        extra = f" clauses {list(self.clauses)}" if self.clauses else ""
        return f"fail at step {self.failing_step}: {self.reason.value}{extra}"


PASS = Verdict(True)


# -- per-step refinement --


def abstract_outcomes(pre: AfsState, call: OpCall):
    """The abstract operation for ``call`` started from ``pre``."""
    if call.op == "create":
        return afs_create(pre, call.vdir, call.name, call.mode, call.vnode)
    if call.op == "unlink":
        return afs_unlink(pre, call.vdir, call.name)
    if call.op == "lookup":
        return afs_lookup(pre, call.vdir, call.name)
    if call.op == "fsync":
        return afs_fsync(pre)
    raise ValueError(f"unknown operation {call.op!r}")


def observed(call: OpCall, post: AfsState, output: OpOutput):
    """The observed step as a value comparable with ``abstract_outcomes``."""
    if call.op == "create":
        return CreateResult(post, output.vdir, output.vnode, output.result)
    if call.op == "unlink":
        return UnlinkResult(post, output.vdir, output.result)
    if call.op == "lookup":
        return output.result
    return (post, output.result)


def _name_present(pre: AfsState, call: OpCall) -> bool:
    parent = updated_afs(pre).get(call.vdir.v_ino)
    return parent is not None and parent.is_dir and call.name in parent.i_type.entries


def check_step(pre: AfsState, call: OpCall, post: AfsState, output: OpOutput) -> bool:
    """Exact refinement check of one step.

    ``pre`` is taken at the clock value the call carries.  A create refused
    with EEXIST never reached the file system, so it must leave everything
    untouched and the name must really exist.
    """
    pre = replace(pre, a_current_time=call.time)
    if call.op == "create" and output.result == Error(ErrorCode.EEXIST):
        return (_name_present(pre, call) and post == pre
                and output.vdir == call.vdir and output.vnode == call.vnode)
    if call.op == "lookup" and post != pre:
        return False
    return contains(abstract_outcomes(pre, call), observed(call, post, output))


def _witness(step: Step) -> str:
    return codec.step_text(step)


def check_trace(trace: Trace) -> Verdict:
    """Continuity, refinement and invariant checks; the first failure wins."""
    prev = None
    for step in trace.steps:
        if prev is None:
            bad = check_invariant(updated_afs(step.pre))
            if bad:
                return Verdict(False, step.index, Reason.INVARIANT_VIOLATED,
                               tuple(sorted({v.clause for v in bad})), _witness(step))
        elif step.pre != prev.post:
            return Verdict(False, step.index, Reason.DISCONTINUITY, (), _witness(step))
        if not check_step(step.pre, step.call, step.post, step.output):
            return Verdict(False, step.index, Reason.NOT_IN_SPEC_SET, (), _witness(step))
        bad = check_invariant(updated_afs(step.post))
        if bad:
            return Verdict(False, step.index, Reason.INVARIANT_VIOLATED,
                           tuple(sorted({v.clause for v in bad})), _witness(step))
        prev = step
    return PASS


# -- buffer-free oracle --


def oracle_replay(trace: Trace, initial: Optional[AfsState] = None) -> dict:
    """Replay successful steps on plain dicts, ignoring buffering entirely.

    Returns ``{ino: (kind, entries, nlink, size)}``.
    """
    start = initial if initial is not None else (trace.steps[0].pre if trace.steps else fresh_state())
    fs = {}
    for ino, inode in updated_afs(start).items():
        entries = dict(inode.i_type.entries) if inode.is_dir else None
        fs[ino] = ["dir" if inode.is_dir else "file", entries, inode.i_nlink, inode.i_size]
    for step in trace.steps:
        c, out = step.call, step.output
        if not isinstance(out.result, Success):
            continue
        if c.op == "create":
            parent = fs[c.vdir.v_ino]
            parent[1][c.name] = out.vnode.v_ino
            parent[3] += entry_size(c.name)
            fs[out.vnode.v_ino] = ["file", None, 1, 0]
        elif c.op == "unlink":
            parent = fs[c.vdir.v_ino]
            target = parent[1].pop(c.name)
            parent[3] -= entry_size(c.name)
            fs[target][2] -= 1
            if fs[target][2] == 0:
                del fs[target]
    return {ino: (k, None if e is None else dict(sorted(e.items())), n, s)
            for ino, (k, e, n, s) in sorted(fs.items())}


def project(m) -> dict:
    return {ino: ("dir" if i.is_dir else "file",
                  dict(sorted(i.i_type.entries.items())) if i.is_dir else None,
                  i.i_nlink, i.i_size)
            for ino, i in sorted(m.items())}


def check_against_oracle(trace: Trace) -> Verdict:
    if not trace.steps:
        return PASS
    want = oracle_replay(trace)
    got = project(updated_afs(trace.steps[-1].post))
    if want != got:
        last = trace.steps[-1]
        return Verdict(False, last.index, Reason.ORACLE_MISMATCH, (),
                       f"oracle {want!r}\nsimulator {got!r}\n")
    return PASS


# -- fuzzing --

NAMES = (b"a", b"b", b"c", b"d", b"e", b"n" * 256)
NAME_WEIGHTS = (5, 5, 4, 3, 2, 1)
OPS = ("create", "unlink", "lookup", "fsync")
OP_WEIGHTS = (4, 2.5, 1.5, 2)
MODES = (0o644, 0o600, 0o755, 0o444)


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 0
    num_scenarios: int = 100
    max_script_len: int = 30
    capacities: tuple = (1, 2, 4, 8)
    # probabilities of ok / fail / allocfail schedule events
    weights: tuple = (0.7, 0.15, 0.15)

    def __post_init__(self):
        if self.num_scenarios < 0:
            raise ValueError("num_scenarios must be non-negative")
        if self.max_script_len <= 0:
            raise ValueError("max_script_len must be positive")
        if not self.capacities or any(c <= 0 for c in self.capacities):
            raise ValueError("capacities must be positive")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights) \
                or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("event weights must be three probabilities summing to 1")


@dataclass(frozen=True)
class Scenario:
    index: int
    capacity: int
    script: tuple
    schedule: FailureSchedule


def generate_scenario(config: FuzzConfig, index: int) -> Scenario:
    rng = random.Random(f"{config.seed}/{index}")
    capacity = config.capacities[index % len(config.capacities)]
    length = rng.randint(1, config.max_script_len)
    script = []
    for _ in range(length):
        op = rng.choices(OPS, OP_WEIGHTS)[0]
        if op == "fsync":
            script.append(ScriptOp("fsync"))
            continue
        name = rng.choices(NAMES, NAME_WEIGHTS)[0]
        mode = rng.choice(MODES) if op == "create" else 0
        script.append(ScriptOp(op, "/", name, mode))
    events = []
    for _ in range(length):
        kind = rng.choices(("ok", "fail", "alloc"), config.weights)[0]
        if kind == "ok":
            events.append(FlushOk(rng.randint(0, capacity) if rng.random() < 0.3 else None))
        elif kind == "fail":
            code = rng.choice((ErrorCode.EIO, ErrorCode.ENOSPC, ErrorCode.ENOSPC))
            events.append(FlushFail(code, rng.randint(0, capacity + 1)))
        else:
            events.append(AllocFail())
    return Scenario(index, capacity, tuple(script), FailureSchedule(tuple(events)))


def run_scenario(sc: Scenario) -> tuple[Trace, Verdict]:
    trace = run_script(list(sc.script), sc.schedule, sc.capacity)
    verdict = check_trace(trace)
    if verdict.passed:
        verdict = check_against_oracle(trace)
    return trace, verdict


@dataclass
class FuzzSummary:
    config: FuzzConfig
    scenarios: int = 0
    steps: int = 0
    failures: int = 0
    first_counterexample: Optional[str] = None
    results: dict = field(default_factory=dict)

    def text(self) -> str:
        c = self.config
        lines = [
            f"seed {c.seed}",
            f"scenarios {self.scenarios}",
            f"max_script_len {c.max_script_len}",
            f"capacities {','.join(map(str, c.capacities))}",
            f"steps {self.steps}",
        ]
        for name in sorted(self.results):
            lines.append(f"result {name} {self.results[name]}")
        lines.append(f"failures {self.failures}")
        if self.first_counterexample:
            lines.append(f"counterexample {self.first_counterexample}")
        if self.failures:
            lines.append(f"FAIL {self.failures}/{self.scenarios}")
        else:
            lines.append(f"PASS {self.scenarios}/{self.scenarios}")
        return "\n".join(lines) + "\n"

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _write_counterexample(out_dir: Path, sc: Scenario, trace: Trace, verdict: Verdict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / f"cex-{sc.index:06d}"
    keep = verdict.failing_step + 1 if verdict.failing_step is not None else len(sc.script)
    base.with_suffix(".script").write_text(format_script(list(sc.script[:keep])))
    base.with_suffix(".schedule").write_text(sc.schedule.format())
    base.with_suffix(".trace").write_text(codec.trace_text(Trace(trace.steps[:keep])))
    base.with_suffix(".verdict").write_text(
        f"capacity {sc.capacity}\n{verdict.describe()}\n{verdict.witness}")
    return base


def fuzz(config: FuzzConfig, out_dir: Optional[Path] = None) -> FuzzSummary:
    """Run seeded scenarios through the simulator and check each trace.

    Failing scenarios are truncated after the failing step and written to
    ``out_dir`` when given.
    """
    summary = FuzzSummary(config)
    for i in range(config.num_scenarios):
        sc = generate_scenario(config, i)
        trace, verdict = run_scenario(sc)
        summary.scenarios += 1
        summary.steps += len(trace)
        for step in trace.steps:
            r = step.output.result
            key = f"{step.call.op}:{'ok' if isinstance(r, Success) else r.code.name}"
            summary.results[key] = summary.results.get(key, 0) + 1
        if not verdict.passed:
            summary.failures += 1
            if out_dir is not None:
                path = _write_counterexample(out_dir, sc, trace, verdict)
                if summary.first_counterexample is None:
                    summary.first_counterexample = str(path)
            elif summary.first_counterexample is None:
                summary.first_counterexample = f"scenario {i}: {verdict.describe()}"
    return summary


# -- bounded exhaustive exploration --

DEFAULT_ALPHABET = (("create", b"a"), ("create", b"b"), ("unlink", b"a"),
                    ("lookup", b"a"), ("fsync", b""))


@dataclass
class ExploreReport:
    depth: int
    states: int = 0
    transitions: int = 0
    per_depth: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    truncated: bool = False

    def text(self) -> str:
        lines = [f"depth {self.depth}", f"states {self.states}",
                 f"transitions {self.transitions}",
                 f"per_depth {','.join(map(str, self.per_depth))}",
                 f"budget_exhausted {'yes' if self.truncated else 'no'}",
                 f"violations {len(self.violations)}"]
        for state, clauses in self.violations[:10]:
            lines.append(f"violation clauses {list(clauses)} state {codec.state_text(state)}")
        return "\n".join(lines) + "\n"


def successors(s: AfsState, alphabet: Iterable[tuple], budget: EnumBudget):
    """Every post state reachable from ``s`` in one step, and a truncation flag.

    Creates of a name that already exists are skipped: the VFS refuses them
    before the file system is called.
    """
    combined = updated_afs(s)
    root = combined.get(ROOT_INO)
    vdir = vnode_from_inode(root)
    out = []
    truncated = False
    for op, name in alphabet:
        if op == "create":
            if name in root.i_type.entries:
                continue
            tree = afs_create(s, vdir, name, 0o644, BLANK_VNODE)
        elif op == "unlink":
            tree = afs_unlink(s, vdir, name)
        elif op == "lookup":
            tree = afs_lookup(s, vdir, name)
        elif op == "fsync":
            tree = afs_fsync(s)
        else:
            raise ValueError(f"unknown operation {op!r}")
        res = enumerate_outcomes(tree, budget)
        # create always truncates at its predicate leaves; only the cap counts
        if len(res.values) >= budget.max_outcomes or (res.truncated and op != "create"):
            truncated = True
        for o in res.values:
            if op == "lookup":
                out.append(s)
            elif op == "fsync":
                out.append(o[0])
            else:
                out.append(o.state)
    return out, truncated


def explore(initial: AfsState, depth: int, alphabet: Iterable[tuple] = DEFAULT_ALPHABET,
            *, samples: int = 2, max_outcomes: int = 100_000) -> ExploreReport:
    """Breadth-first search over all abstract outcomes up to ``depth`` steps.

    States are deduplicated structurally.  Predicate choices contribute
    ``samples`` values each, which is expected and not reported as budget
    exhaustion; hitting ``max_outcomes`` is.
    """
    alphabet = tuple(alphabet)
    budget = EnumBudget(max_outcomes=max_outcomes, max_predicate_samples=samples)
    report = ExploreReport(depth)
    seen = {initial}
    frontier = deque([initial])
    report.per_depth.append(1)
    _audit(initial, report)
    for _ in range(depth):
        nxt = deque()
        for s in frontier:
            if not _root_ok(s):
                continue
            posts, truncated = successors(s, alphabet, budget)
            report.truncated |= truncated
            for p in posts:
                report.transitions += 1
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
                    _audit(p, report)
        report.per_depth.append(len(nxt))
        frontier = nxt
    report.states = len(seen)
    return report


def _root_ok(s: AfsState) -> bool:
    root = updated_afs(s).get(ROOT_INO)
    return root is not None and root.is_dir


def _audit(s: AfsState, report: ExploreReport) -> None:
    bad = check_invariant(updated_afs(s))
    if bad:
        report.violations.append((s, tuple(sorted({v.clause for v in bad}))))
