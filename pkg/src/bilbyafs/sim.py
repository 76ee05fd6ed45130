"""A small buffered file system with scripted failures.

``BilbyFs`` keeps a bounded FIFO of update records in memory in front of a
simulated medium.  Medium writes and buffer allocations fail only when the
:class:`FailureSchedule` says so, which keeps every run reproducible.
"""

from __future__ import annotations

import codecs
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .model import (
    NAME_MAX,
    ROOT_INO,
    S_IFREG,
    SUCCESS,
    U32_MAX,
    U64_MAX,
    AfsInode,
    AfsState,
    Dir,
    Error,
    ErrorCode,
    File,
    FrozenMap,
    Success,
    UpdateRecord,
    Vnode,
    apply_update,
    entry_size,
    fresh_state,
    lookup_path,
    valid_filename,
    vnode_from_inode,
)
from .ops import unlink_record

FLUSH_FAIL_CODES = (ErrorCode.EIO, ErrorCode.ENOSPC)


class ScriptError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


# -- failure schedule -------------------------------------------------------


@dataclass(frozen=True)
class FlushOk:
    """Let the medium write go through.  ``n`` asks for at least n records."""

    n: Optional[int] = None


@dataclass(frozen=True)
class FlushFail:
    code: ErrorCode
    applied: int = 0

    def __post_init__(self):
        if self.code not in FLUSH_FAIL_CODES:
            raise ValueError(f"flush failures are EIO or ENOSPC, not {self.code.name}")
        if self.applied < 0:
            raise ValueError("applied count must be non-negative")


@dataclass(frozen=True)
class AllocFail:
    pass


Event = Union[FlushOk, FlushFail, AllocFail]


@dataclass(frozen=True)
class FailureSchedule:
    events: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "FailureSchedule":
        events = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            words = raw.split("#", 1)[0].split()
            if not words:
                continue
            try:
                events.append(_parse_event(words))
            except ValueError as e:
                raise ScriptError(lineno, str(e)) from None
        return cls(tuple(events))

    def format(self) -> str:
        lines = []
        for ev in self.events:
            if isinstance(ev, FlushOk):
                lines.append("ok" if ev.n is None else f"ok {ev.n}")
            elif isinstance(ev, FlushFail):
                lines.append(f"fail {ev.code.name} {ev.applied}")
            else:
                lines.append("allocfail")
        return "".join(line + "\n" for line in lines)


def _parse_event(words: list[str]) -> Event:
    kind, args = words[0].lower(), words[1:]
    if kind == "ok" and len(args) <= 1:
        return FlushOk(int(args[0]) if args else None)
    if kind == "fail" and len(args) == 2:
        return FlushFail(ErrorCode.parse(args[0]), int(args[1]))
    if kind == "allocfail" and not args:
        return AllocFail()
    raise ValueError(f"bad schedule event: {' '.join(words)!r}")


# -- simulator --------------------------------------------------------------


@dataclass
class Medium:
    stored: FrozenMap
    flush_count: int = 0

    def write(self, record: UpdateRecord) -> None:
        self.stored = apply_update(record, self.stored)
        self.flush_count += 1


@dataclass
class WriteBuffer:
    capacity: int
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("buffer capacity must be positive")


class BilbyFs:
    """Deterministic buffered file system.

    Operations take and return vnodes like their abstract counterparts and
    mutate the simulator in place.  :meth:`alpha` gives the abstract view.
    """

    def __init__(self, capacity: int = 4, schedule: FailureSchedule = FailureSchedule(),
                 *, initial: Optional[AfsState] = None, max_ino: int = U32_MAX):
        initial = initial or fresh_state()
        self.medium = Medium(initial.a_medium_afs)
        self.buffer = WriteBuffer(capacity)
        self.readonly = initial.a_is_readonly
        self.clock = initial.a_current_time
        self.schedule = schedule
        self.cursor = 0
        self.max_ino = max_ino
        # medium with every buffered record applied
        self._view = initial.a_medium_afs.to_dict()
        for record in initial.a_medium_updates:
            self.buffer.entries.append(record)
            self._overlay(record)

    def alpha(self) -> AfsState:
        return AfsState(self.readonly, self.clock, self.medium.stored,
                        tuple(self.buffer.entries))

    def view(self) -> FrozenMap:
        return FrozenMap(self._view)

    def resolve(self, path: str) -> Optional[Vnode]:
        inode = lookup_path(self._view, path)
        return None if inode is None else vnode_from_inode(inode)

    # -- internals --

    def _overlay(self, record: UpdateRecord) -> None:
        for ino, inode in record.bindings:
            if inode is None:
                self._view.pop(ino, None)
            else:
                self._view[ino] = inode

    def _next_event(self) -> Event:
        if self.cursor < len(self.schedule.events):
            ev = self.schedule.events[self.cursor]
            self.cursor += 1
            return ev
        return FlushOk()

    def _write_oldest(self, count: int) -> None:
        for record in self.buffer.entries[:count]:
            self.medium.write(record)
        del self.buffer.entries[:count]

    def _commit(self, record: UpdateRecord) -> Union[Success, Error]:
        ev = self._next_event()
        if isinstance(ev, AllocFail):
            return Error(ErrorCode.ENOMEM)
        if isinstance(ev, FlushFail):
            # the new record is never written: it was not queued yet
            self._write_oldest(min(ev.applied, len(self.buffer.entries)))
            return Error(ev.code)
        self.buffer.entries.append(record)
        self._overlay(record)
        excess = len(self.buffer.entries) - self.buffer.capacity
        count = min(len(self.buffer.entries), max(excess, ev.n or 0))
        self._write_oldest(count)
        return SUCCESS

    def _allocate_ino(self) -> Optional[int]:
        n = 2
        while n <= self.max_ino:
            if n not in self._view:
                return n
            n += 1
        return None

    # -- operations --

    def create(self, vdir: Vnode, name: bytes, mode: int, vnode: Vnode):
        """Returns ``(vdir, vnode, result)``."""
        if self.readonly:
            return vdir, vnode, Error(ErrorCode.EROFS)
        ino = self._allocate_ino()
        if ino is None:
            return vdir, vnode, Error(ErrorCode.ENFILE)
        fresh = Vnode(ino, 1, 0, mode | S_IFREG, self.clock, self.clock)
        parent = self._view[vdir.v_ino]
        if len(name) > NAME_MAX:
            return vdir, fresh, Error(ErrorCode.ENAMETOOLONG)
        newsz = parent.i_size + entry_size(name)
        if newsz > U64_MAX:
            return vdir, fresh, Error(ErrorCode.EOVERFLOW)
        now = fresh.v_ctime
        inode = AfsInode(File(), ino, 1, 0, fresh.v_mode, now, now)
        new_parent = replace(parent, i_type=Dir(parent.i_type.entries.set(name, ino)),
                             i_size=newsz, i_ctime=now, i_mtime=now)
        result = self._commit(UpdateRecord.put(inode, new_parent))
        if isinstance(result, Error):
            return vdir, fresh, result
        return replace(vdir, v_size=newsz, v_ctime=now, v_mtime=now), fresh, result

    def unlink(self, vdir: Vnode, name: bytes):
        """Returns ``(vdir, result)``."""
        if self.readonly:
            return vdir, Error(ErrorCode.EROFS)
        parent = self._view.get(vdir.v_ino)
        ino = parent.i_type.entries.get(name) if parent is not None and parent.is_dir else None
        target = None if ino is None else self._view.get(ino)
        if target is None or target.is_dir:
            return vdir, Error(ErrorCode.ENOENT)
        record = unlink_record(parent, name, target, self.clock)
        result = self._commit(record)
        if isinstance(result, Error):
            return vdir, result
        return replace(vdir, v_size=record.bindings[0][1].i_size,
                       v_ctime=self.clock, v_mtime=self.clock), result

    def lookup(self, vdir: Vnode, name: bytes) -> Union[Success, Error]:
        parent = self._view.get(vdir.v_ino)
        ino = parent.i_type.entries.get(name) if parent is not None and parent.is_dir else None
        target = None if ino is None else self._view.get(ino)
        if target is None:
            return Error(ErrorCode.ENOENT)
        return Success(vnode_from_inode(target))

    def fsync(self) -> Union[Success, Error]:
        if self.readonly:
            return Error(ErrorCode.EROFS)
        if not self.buffer.entries:
            return SUCCESS
        ev = self._next_event()
        if isinstance(ev, AllocFail):
            return Error(ErrorCode.ENOMEM)
        if isinstance(ev, FlushFail):
            self._write_oldest(min(ev.applied, len(self.buffer.entries) - 1))
            if ev.code == ErrorCode.EIO:
                self.readonly = True
            return Error(ev.code)
        self._write_oldest(len(self.buffer.entries))
        return SUCCESS


# -- scripts and traces -----------------------------------------------------


@dataclass(frozen=True)
class ScriptOp:
    op: str
    parent: str = "/"
    name: bytes = b""
    mode: int = 0
    lineno: int = 0

    def format(self) -> str:
        if self.op == "fsync":
            return "fsync"
        name = _encode_name(self.name)
        if self.op == "create":
            return f"create {self.parent} {name} {self.mode:x}"
        return f"{self.op} {self.parent} {name}"


def _encode_name(name: bytes) -> str:
    out = []
    for b in name:
        c = chr(b)
        if 0x21 <= b < 0x7F and c not in "\\#":
            out.append(c)
        else:
            out.append(f"\\x{b:02x}")
    return "".join(out)


def _decode_name(token: str) -> bytes:
    return codecs.escape_decode(token.encode("latin-1"))[0]


def parse_script(text: str) -> list[ScriptOp]:
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        words = raw.split("#", 1)[0].split()
        if not words:
            continue
        kind, args = words[0], words[1:]
        try:
            if kind == "fsync" and not args:
                ops.append(ScriptOp("fsync", lineno=lineno))
                continue
            if kind == "create" and len(args) == 3:
                mode = int(args[2], 16)
                if not 0 <= mode <= U32_MAX:
                    raise ValueError("mode out of range")
            elif kind in ("unlink", "lookup") and len(args) == 2:
                mode = 0
            else:
                raise ValueError(f"cannot parse {raw.strip()!r}")
            name = _decode_name(args[1])
            if not valid_filename(name):
                raise ValueError(f"invalid file name {args[1]!r}")
            if not args[0].startswith("/"):
                raise ValueError(f"parent path must be absolute: {args[0]!r}")
        except (ValueError, UnicodeError) as e:
            raise ScriptError(lineno, str(e)) from None
        ops.append(ScriptOp(kind, args[0], name, mode, lineno))
    return ops


def format_script(ops: list[ScriptOp]) -> str:
    return "".join(op.format() + "\n" for op in ops)


@dataclass(frozen=True)
class OpCall:
    """One operation invocation with its inputs, as seen by the file system."""

    op: str
    time: int
    parent: str = ""
    vdir: Optional[Vnode] = None
    name: bytes = b""
    mode: int = 0
    vnode: Optional[Vnode] = None


@dataclass(frozen=True)
class OpOutput:
    result: object
    vdir: Optional[Vnode] = None
    vnode: Optional[Vnode] = None


@dataclass(frozen=True)
class Step:
    index: int
    call: OpCall
    pre: AfsState
    post: AfsState
    output: OpOutput


@dataclass(frozen=True)
class Trace:
    steps: tuple = ()

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


TICK = 1_000
BLANK_VNODE = Vnode()


def step_time(index: int, start: int = 0) -> int:
    return start + (index + 1) * TICK


def run_script(script: list[ScriptOp], schedule: FailureSchedule = FailureSchedule(),
               capacity: int = 4, *, initial: Optional[AfsState] = None,
               fs: Optional[BilbyFs] = None) -> Trace:
    """Run ``script`` on a fresh simulator and record every step.

    Each step gets a clock tick before it runs.  ``create`` on a name that
    already exists is refused with EEXIST before it reaches the file system,
    as the VFS layer does.
    """
    fs = fs or BilbyFs(capacity, schedule, initial=initial)
    start = fs.clock
    steps = []
    for i, sop in enumerate(script):
        pre = fs.alpha()
        fs.clock = step_time(i, start)
        if sop.op == "fsync":
            call = OpCall("fsync", fs.clock)
            output = OpOutput(fs.fsync())
        else:
            vdir = fs.resolve(sop.parent)
            if vdir is None or not fs._view[vdir.v_ino].is_dir:
                raise ScriptError(sop.lineno, f"{sop.parent!r} is not a directory")
            if sop.op == "create":
                call = OpCall("create", fs.clock, sop.parent, vdir, sop.name, sop.mode, BLANK_VNODE)
                if sop.name in fs._view[vdir.v_ino].i_type.entries:
                    output = OpOutput(Error(ErrorCode.EEXIST), vdir, BLANK_VNODE)
                else:
                    out_vdir, out_vnode, result = fs.create(vdir, sop.name, sop.mode, BLANK_VNODE)
                    output = OpOutput(result, out_vdir, out_vnode)
            elif sop.op == "unlink":
                call = OpCall("unlink", fs.clock, sop.parent, vdir, sop.name)
                out_vdir, result = fs.unlink(vdir, sop.name)
                output = OpOutput(result, out_vdir)
            elif sop.op == "lookup":
                call = OpCall("lookup", fs.clock, sop.parent, vdir, sop.name)
                output = OpOutput(fs.lookup(vdir, sop.name))
            else:
                raise ScriptError(sop.lineno, f"unknown operation {sop.op!r}")
        steps.append(Step(i, call, pre, fs.alpha(), output))
    return Trace(tuple(steps))


def root_vnode(fs: BilbyFs) -> Vnode:
    return vnode_from_inode(fs._view[ROOT_INO])
