"""Canonical text form of states, records and traces.

Values become compact JSON with sorted object keys.  Inodes are listed by
inode number and directory entries by name bytes, so equal values always
serialize to identical text.  Names are carried as latin-1 strings, which
keeps byte order and round-trips every byte.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from .model import (
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
)
from .sim import OpCall, OpOutput, Step, Trace

TRACE_HEADER = "bilbyafs-trace 1"


class DecodeError(ValueError):
    pass


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _name(b: bytes) -> str:
    return b.decode("latin-1")


def _bytes(s: str) -> bytes:
    return s.encode("latin-1")


# -- to plain objects --


def inode_obj(inode: AfsInode) -> dict:
    obj = {"ino": inode.i_ino, "nlink": inode.i_nlink, "size": inode.i_size,
           "mode": inode.i_mode, "ctime": inode.i_ctime, "mtime": inode.i_mtime}
    if isinstance(inode.i_type, Dir):
        entries = inode.i_type.entries
        obj["dir"] = [[_name(n), entries[n]] for n in sorted(entries)]
    else:
        obj["file"] = [p.hex() for p in inode.i_type.pages]
    return obj


def map_obj(m) -> list:
    return [inode_obj(m[k]) for k in sorted(m)]


def record_obj(u: UpdateRecord) -> list:
    return [[k, None if inode is None else inode_obj(inode)] for k, inode in u.bindings]


def state_obj(s: AfsState) -> dict:
    return {"readonly": s.a_is_readonly, "time": s.a_current_time,
            "medium": map_obj(s.a_medium_afs),
            "pending": [record_obj(u) for u in s.a_medium_updates]}


def vnode_obj(v: Optional[Vnode]):
    if v is None:
        return None
    return [v.v_ino, v.v_nlink, v.v_size, v.v_mode, v.v_ctime, v.v_mtime]


def result_obj(r) -> dict:
    if isinstance(r, Error):
        return {"error": r.code.name}
    if isinstance(r.value, Vnode):
        return {"ok": vnode_obj(r.value)}
    if r.value is not None:
        raise TypeError(f"cannot serialize result payload {r.value!r}")
    return {"ok": None}


def state_text(s: AfsState) -> str:
    return dumps(state_obj(s))


def map_text(m) -> str:
    return dumps(map_obj(m))


def record_text(u: UpdateRecord) -> str:
    return dumps(record_obj(u))


# -- from plain objects --


def inode_from(obj: dict) -> AfsInode:
    if "dir" in obj:
        content = Dir(FrozenMap((_bytes(n), int(i)) for n, i in obj["dir"]))
    else:
        content = File(tuple(bytes.fromhex(p) for p in obj["file"]))
    return AfsInode(content, obj["ino"], obj["nlink"], obj["size"], obj["mode"],
                    obj["ctime"], obj["mtime"])


def map_from(obj: list) -> FrozenMap:
    return FrozenMap((o["ino"], inode_from(o)) for o in obj)


def record_from(obj: list) -> UpdateRecord:
    return UpdateRecord(tuple((k, None if i is None else inode_from(i)) for k, i in obj))


def state_from(obj: dict) -> AfsState:
    return AfsState(bool(obj["readonly"]), obj["time"], map_from(obj["medium"]),
                    tuple(record_from(u) for u in obj["pending"]))


def vnode_from(obj) -> Optional[Vnode]:
    return None if obj is None else Vnode(*obj)


def result_from(obj: dict):
    if "error" in obj:
        return Error(ErrorCode[obj["error"]])
    payload = obj["ok"]
    return Success(None if payload is None else Vnode(*payload))


def parse_state(text: str) -> AfsState:
    try:
        return state_from(json.loads(text))
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"malformed state: {e}") from None


# -- traces --


def call_obj(c: OpCall) -> dict:
    return {"op": c.op, "time": c.time, "parent": c.parent, "vdir": vnode_obj(c.vdir),
            "name": _name(c.name), "mode": c.mode, "vnode": vnode_obj(c.vnode)}


def call_from(obj: dict) -> OpCall:
    return OpCall(obj["op"], obj["time"], obj["parent"], vnode_from(obj["vdir"]),
                  _bytes(obj["name"]), obj["mode"], vnode_from(obj["vnode"]))


def output_obj(o: OpOutput) -> dict:
    return {"result": result_obj(o.result), "vdir": vnode_obj(o.vdir),
            "vnode": vnode_obj(o.vnode)}


def output_from(obj: dict) -> OpOutput:
    return OpOutput(result_from(obj["result"]), vnode_from(obj["vdir"]), vnode_from(obj["vnode"]))


def step_text(step: Step) -> str:
    return (f"step {step.index}\n"
            f"call {dumps(call_obj(step.call))}\n"
            f"pre {state_text(step.pre)}\n"
            f"post {state_text(step.post)}\n"
            f"output {dumps(output_obj(step.output))}\n")


def trace_text(trace: Trace) -> str:
    """One block per step, blocks separated by blank lines."""
    return TRACE_HEADER + "\n\n" + "\n".join(step_text(s) for s in trace.steps)


def parse_trace(text: str) -> Trace:
    blocks = [b for b in text.split("\n\n") if b.strip()]
    if not blocks or blocks[0].strip() != TRACE_HEADER:
        raise DecodeError("missing trace header")
    steps = []
    for block in blocks[1:]:
        fields = {}
        for line in block.strip().splitlines():
            key, _, value = line.partition(" ")
            fields[key] = value
        try:
            steps.append(Step(int(fields["step"]),
                              call_from(json.loads(fields["call"])),
                              state_from(json.loads(fields["pre"])),
                              state_from(json.loads(fields["post"])),
                              output_from(json.loads(fields["output"]))))
        except (KeyError, TypeError, ValueError) as e:
            raise DecodeError(f"malformed step block: {e}") from None
    return Trace(tuple(steps))
