"""Asynchronous write machinery: nondeterministic flushing and afs_update."""

from __future__ import annotations

from dataclasses import replace

from .model import (
    SUCCESS,
    AfsState,
    Error,
    ErrorCode,
    FrozenMap,
    Success,
    UpdateRecord,
    apply_all,
    updated_afs,
)
from .nondet import Outcomes, bind, choice, nondet_error, pure, select

UPDATE_ERRORS = (ErrorCode.EIO, ErrorCode.ENOSPC, ErrorCode.ENOMEM)


def combined_state(afs: AfsState) -> FrozenMap:
    return updated_afs(afs)


def splits(updates: tuple) -> list[tuple[tuple, tuple]]:
    return [(updates[:k], updates[k:]) for k in range(len(updates) + 1)]


def afs_apply_updates_nondet(afs: AfsState) -> Outcomes[AfsState]:
    """Flush any prefix of the pending list to the medium."""
    pending = afs.a_medium_updates

    def flush(split):
        to_apply, rem = split
        return pure(replace(afs,
                            a_medium_afs=apply_all(to_apply, afs.a_medium_afs),
                            a_medium_updates=rem))

    def invert(o):
        if not isinstance(o, AfsState):
            return ()
        k = len(pending) - len(o.a_medium_updates)
        if k < 0:
            return ()
        return ((pending[:k], pending[k:]),)

    return bind(select(splits(pending)), flush, invert)


def afs_update(afs: AfsState, upd: UpdateRecord) -> Outcomes[tuple[AfsState, Success | Error]]:
    """Queue ``upd``, flush nondeterministically, then succeed or drop ``upd``.

    A branch that flushed everything must succeed.  Any other branch may
    also fail with one of UPDATE_ERRORS, in which case ``upd`` (always the
    last pending record there) is removed again.
    """
    queued = replace(afs, a_medium_updates=afs.a_medium_updates + (upd,))

    def settle(s: AfsState):
        if not s.a_medium_updates:
            return pure((s, SUCCESS))
        dropped = replace(s, a_medium_updates=s.a_medium_updates[:-1])
        return choice(pure((s, SUCCESS)),
                      nondet_error(UPDATE_ERRORS, lambda e: (dropped, Error(e))))

    def invert(x):
        try:
            s, r = x
        except (TypeError, ValueError):
            return ()
        if not isinstance(s, AfsState):
            return ()
        if isinstance(r, Error):
            return (replace(s, a_medium_updates=s.a_medium_updates + (upd,)),)
        return (s,)

    return bind(afs_apply_updates_nondet(queued), settle, invert)
