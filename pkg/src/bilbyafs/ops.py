"""Top-level file system operations as outcome trees.

``afs_create`` and ``afs_fsync`` follow the reference definitions step by
step.  ``afs_lookup`` and ``afs_unlink`` are small companions written in the
same style so the harness has something to remove and query.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Union

from .model import (
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
    Success,
    UpdateRecord,
    Vnode,
    afs_inode_from_vnode,
    entry_size,
    i_dir_update,
    updated_afs,
    vnode_from_inode,
)
from .nondet import Outcomes, bind, choice, nondet_error, pure, select, select_where
from .updates import afs_apply_updates_nondet, afs_update

READ_ERRORS = (ErrorCode.EIO, ErrorCode.ENOMEM)
FSYNC_ERRORS = (ErrorCode.EIO, ErrorCode.ENOMEM, ErrorCode.ENOSPC, ErrorCode.EOVERFLOW)

Result = Union[Success, Error]


class InitOutcome(NamedTuple):
    ok: bool
    afs: AfsState
    vnode: Vnode


@dataclass(frozen=True, slots=True)
class CreateResult:
    state: AfsState
    vdir: Vnode
    vnode: Vnode
    result: Result


@dataclass(frozen=True, slots=True)
class UnlinkResult:
    state: AfsState
    vdir: Vnode
    result: Result


def afs_init_inode(afs: AfsState, vdir: Vnode, vnode: Vnode, mode: int,
                   *, max_ino: int = U32_MAX) -> Outcomes[InitOutcome]:
    """Allocate an unused inode number and fill in a fresh vnode.

    Failure (inode numbers exhausted) is always a possible outcome.
    """
    combined = updated_afs(afs)
    now = afs.a_current_time

    def unused(n) -> bool:
        return (isinstance(n, int) and 0 <= n <= max_ino
                and n != ROOT_INO and n not in combined)

    def lowest_unused():
        n = 2
        while n <= max_ino:
            if n not in combined:
                yield n
            n += 1

    def fill(n):
        return pure(InitOutcome(True, afs, Vnode(n, 1, 0, mode, now, now)))

    def invert(o):
        if isinstance(o, InitOutcome) and o.ok:
            return (o.vnode.v_ino,)
        return ()

    allocated = bind(select_where(unused, lowest_unused, "unused inode number"), fill, invert)
    return choice(allocated, pure(InitOutcome(False, afs, vnode)))


def read_afs_inode(afs: AfsState, ino: int) -> Outcomes[Result]:
    """Read from the combined state; may fail with EIO or ENOMEM."""
    inode = updated_afs(afs).get(ino)
    errors = nondet_error(READ_ERRORS, Error)
    if inode is None:
        return errors
    return choice(pure(Success(inode)), errors)


def _larger_sizes(old: int, first: int):
    def member(sz) -> bool:
        return isinstance(sz, int) and old < sz <= U64_MAX

    def candidates():
        sz = max(first, old + 1)
        while sz <= U64_MAX:
            yield sz
            sz += 1

    return select_where(member, candidates, f"any size above {old}")


def afs_create(afs: AfsState, vdir: Vnode, name: bytes, mode: int,
               vnode: Vnode) -> Outcomes[CreateResult]:
    if afs.a_is_readonly:
        return pure(CreateResult(afs, vdir, vnode, Error(ErrorCode.EROFS)))

    def after_init(r: InitOutcome):
        afs1, vnode1 = r.afs, r.vnode
        if not r.ok:
            return pure(CreateResult(afs1, vdir, vnode1, Error(ErrorCode.ENFILE)))

        def after_read(rd):
            if isinstance(rd, Error):
                return pure(CreateResult(afs1, vdir, vnode1, rd))
            named = choice(
                pure(Success(i_dir_update(lambda d: d.set(name, vnode1.v_ino), rd.value))),
                pure(Error(ErrorCode.ENAMETOOLONG)))

            def after_name(rn):
                if isinstance(rn, Error):
                    return pure(CreateResult(afs1, vdir, vnode1, rn))
                dir_ = rn.value
                sizes = choice(
                    bind(_larger_sizes(vdir.v_size, vdir.v_size + entry_size(name)),
                         lambda sz: pure(Success(sz)),
                         lambda s: (s.value,) if isinstance(s, Success) else ()),
                    pure(Error(ErrorCode.EOVERFLOW)))

                def after_size(rs):
                    if isinstance(rs, Error):
                        return pure(CreateResult(afs1, vdir, vnode1, rs))
                    newsz = rs.value
                    time = vnode1.v_ctime
                    dir2 = replace(dir_, i_ctime=time, i_mtime=time, i_size=newsz)
                    inode = afs_inode_from_vnode(vnode1)
                    upd = UpdateRecord.put(inode, dir2)

                    def finish(x):
                        s, r = x
                        if isinstance(r, Error):
                            return pure(CreateResult(s, vdir, vnode1, r))
                        return pure(CreateResult(
                            s, replace(vdir, v_ctime=time, v_mtime=time, v_size=newsz),
                            vnode1, SUCCESS))

                    return bind(afs_update(afs1, upd), finish, _state_and_result)

                return bind(sizes, after_size, _size_preimage(vdir))

            return bind(named, after_name)

        return bind(read_afs_inode(afs1, vdir.v_ino), after_read)

    return bind(afs_init_inode(afs, vdir, vnode, mode | S_IFREG), after_init,
                _init_preimage(afs, vnode))


def _state_and_result(x):
    if isinstance(x, (CreateResult, UnlinkResult)):
        return ((x.state, x.result),)
    return ()


def _init_preimage(afs: AfsState, vnode: Vnode):
    # every branch after a successful init returns the filled vnode verbatim
    def invert(x):
        if not isinstance(x, CreateResult):
            return ()
        return (InitOutcome(True, afs, x.vnode), InitOutcome(False, afs, x.vnode))
    return invert


def _size_preimage(vdir: Vnode):
    # On success the chosen size is visible in the returned vdir.  On error
    # the update carrying it was dropped, so every size yields the same error
    # outcomes and one representative size decides membership.
    representative = Success(vdir.v_size + 1)

    def invert(x):
        if not isinstance(x, CreateResult):
            return ()
        if isinstance(x.result, Success):
            return (Success(x.vdir.v_size),)
        return (representative, Error(ErrorCode.EOVERFLOW))
    return invert


def afs_fsync(afs: AfsState) -> Outcomes[tuple[AfsState, Result]]:
    if afs.a_is_readonly:
        return pure((afs, Error(ErrorCode.EROFS)))

    def after_flush(s: AfsState):
        if not s.a_medium_updates:
            return pure((s, SUCCESS))
        return bind(select(FSYNC_ERRORS),
                    lambda e: pure((replace(s, a_is_readonly=(e == ErrorCode.EIO)), Error(e))))

    def invert(x):
        try:
            s, r = x
        except (TypeError, ValueError):
            return ()
        if not isinstance(s, AfsState):
            return ()
        if isinstance(r, Error):
            return (replace(s, a_is_readonly=afs.a_is_readonly),)
        return (s,)

    return bind(afs_apply_updates_nondet(afs), after_flush, invert)


def _parent_dir(afs: AfsState, vdir: Vnode):
    combined = updated_afs(afs)
    parent = combined.get(vdir.v_ino)
    if parent is None or not isinstance(parent.i_type, Dir):
        return combined, None
    return combined, parent


def afs_lookup(afs: AfsState, vdir: Vnode, name: bytes) -> Outcomes[Result]:
    """Find ``name`` in the directory ``vdir`` names, in the combined state."""
    combined, parent = _parent_dir(afs, vdir)
    target = None
    if parent is not None:
        ino = parent.i_type.entries.get(name)
        target = None if ino is None else combined.get(ino)
    if target is None:
        return pure(Error(ErrorCode.ENOENT))
    return choice(pure(Success(vnode_from_inode(target))), nondet_error(READ_ERRORS, Error))


def unlink_record(parent: AfsInode, name: bytes, target: AfsInode, now: int) -> UpdateRecord:
    entries = parent.i_type.entries.delete(name)
    new_parent = replace(parent, i_type=Dir(entries),
                         i_size=max(0, parent.i_size - entry_size(name)),
                         i_ctime=now, i_mtime=now)
    if target.i_nlink <= 1:
        return UpdateRecord(((parent.i_ino, new_parent), (target.i_ino, None)))
    survivor = replace(target, i_nlink=target.i_nlink - 1, i_ctime=now)
    return UpdateRecord.put(new_parent, survivor)


def afs_unlink(afs: AfsState, vdir: Vnode, name: bytes) -> Outcomes[UnlinkResult]:
    """Remove a file entry.  Directory targets are reported as ENOENT."""
    if afs.a_is_readonly:
        return pure(UnlinkResult(afs, vdir, Error(ErrorCode.EROFS)))
    combined, parent = _parent_dir(afs, vdir)
    target = None
    if parent is not None:
        ino = parent.i_type.entries.get(name)
        target = None if ino is None else combined.get(ino)
    if target is None or target.is_dir:
        return pure(UnlinkResult(afs, vdir, Error(ErrorCode.ENOENT)))

    now = afs.a_current_time
    upd = unlink_record(parent, name, target, now)
    new_parent = upd.bindings[0][1]
    vdir_after = replace(vdir, v_size=new_parent.i_size, v_ctime=now, v_mtime=now)

    def finish(x):
        s, r = x
        if isinstance(r, Error):
            return pure(UnlinkResult(s, vdir, r))
        return pure(UnlinkResult(s, vdir_after, SUCCESS))

    return bind(afs_update(afs, upd), finish, _state_and_result)
