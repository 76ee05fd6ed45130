"""Abstract file system state.

The medium is a partial map from inode numbers to inodes.  Pending writes
are :class:`UpdateRecord` values; applying them in order to the medium gives
the combined state that clients observe.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Optional, TypeVar, Union

K = TypeVar("K")
V = TypeVar("V")

ROOT_INO = 1
PAGE_SIZE = 4096
NAME_MAX = 255
DIR_ENTRY_OVERHEAD = 16

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1

S_IFMT = 0xF000
S_IFDIR = 0x4000
S_IFREG = 0x8000


class ErrorCode(enum.IntEnum):
    ENOENT = 2
    EIO = 5
    ENOMEM = 12
    EEXIST = 17
    ENFILE = 23
    ENOSPC = 28
    EROFS = 30
    ENAMETOOLONG = 36
    EOVERFLOW = 75

    @classmethod
    def parse(cls, text: str) -> "ErrorCode":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown error code {text!r}") from None


class FrozenMap(Mapping[K, V]):
    """Immutable, hashable mapping.  Updates return new maps."""

    __slots__ = ("_d", "_hash")

    def __init__(self, items: Union[Mapping[K, V], Iterable[tuple[K, V]]] = ()):
        self._d = dict(items)
        self._hash = None

    @classmethod
    def _wrap(cls, d: dict) -> "FrozenMap":
        m = cls.__new__(cls)
        m._d = d
        m._hash = None
        return m

    def __getitem__(self, key: K) -> V:
        return self._d[key]

    def __contains__(self, key) -> bool:
        return key in self._d

    def __iter__(self) -> Iterator[K]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def get(self, key, default=None):
        return self._d.get(key, default)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if isinstance(other, FrozenMap):
            if self._hash is not None and other._hash is not None and self._hash != other._hash:
                return False
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"FrozenMap({self._d!r})"

    def set(self, key: K, value: V) -> "FrozenMap[K, V]":
        d = dict(self._d)
        d[key] = value
        return FrozenMap._wrap(d)

    def delete(self, key: K) -> "FrozenMap[K, V]":
        if key not in self._d:
            return self
        d = dict(self._d)
        del d[key]
        return FrozenMap._wrap(d)

    def to_dict(self) -> dict:
        return dict(self._d)


# -- inodes -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Dir:
    entries: FrozenMap = field(default_factory=FrozenMap)


@dataclass(frozen=True, slots=True)
class File:
    pages: tuple = ()


InodeContent = Union[Dir, File]


@dataclass(frozen=True, slots=True)
class AfsInode:
    i_type: InodeContent
    i_ino: int
    i_nlink: int
    i_size: int
    i_mode: int
    i_ctime: int = 0
    i_mtime: int = 0

    @property
    def is_dir(self) -> bool:
        return isinstance(self.i_type, Dir)


AfsMap = FrozenMap  # FrozenMap[int, AfsInode]


@dataclass(frozen=True, slots=True)
class Vnode:
    v_ino: int = 0
    v_nlink: int = 0
    v_size: int = 0
    v_mode: int = 0
    v_ctime: int = 0
    v_mtime: int = 0


@dataclass(frozen=True, slots=True)
class UpdateRecord:
    """A medium transformation as data.

    ``bindings`` holds ``(ino, inode)`` pairs applied in order; an inode of
    None removes the key.
    """

    bindings: tuple = ()

    def __post_init__(self):
        keys = [k for k, _ in self.bindings]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate inode numbers in update record: {keys}")
        for k, inode in self.bindings:
            if inode is not None and inode.i_ino != k:
                raise ValueError(f"binding key {k} does not match i_ino {inode.i_ino}")

    @classmethod
    def put(cls, *inodes: AfsInode) -> "UpdateRecord":
        return cls(tuple((i.i_ino, i) for i in inodes))

    def keys(self) -> tuple:
        return tuple(k for k, _ in self.bindings)


@dataclass(frozen=True, slots=True)
class AfsState:
    a_is_readonly: bool
    a_current_time: int
    a_medium_afs: FrozenMap
    a_medium_updates: tuple = ()


# -- results ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Success:
    value: object = None

    def __repr__(self) -> str:
        return "Success()" if self.value is None else f"Success({self.value!r})"


@dataclass(frozen=True, slots=True)
class Error:
    code: ErrorCode

    def __repr__(self) -> str:
        return f"Error({self.code.name})"


Result = Union[Success, Error]
SUCCESS = Success()


# -- operations -------------------------------------------------------------


def apply_update(u: UpdateRecord, m: FrozenMap) -> FrozenMap:
    if not u.bindings:
        return m
    d = m.to_dict()
    for ino, inode in u.bindings:
        if inode is None:
            d.pop(ino, None)
        else:
            d[ino] = inode
    return FrozenMap._wrap(d)


def apply_all(updates: Iterable[UpdateRecord], m: FrozenMap) -> FrozenMap:
    return reduce(lambda acc, u: apply_update(u, acc), updates, m)


def updated_afs(afs: AfsState) -> FrozenMap:
    """The combined state: pending updates folded over the medium, head first."""
    return apply_all(afs.a_medium_updates, afs.a_medium_afs)


def entry_size(name: bytes) -> int:
    return len(name) + DIR_ENTRY_OVERHEAD


def valid_filename(name: bytes) -> bool:
    """Non-empty, no '/' and no NUL.  Length limits are left to the caller."""
    return bool(name) and b"/" not in name and b"\0" not in name


def i_dir_update(f: Callable[[FrozenMap], FrozenMap], inode: AfsInode) -> AfsInode:
    if not isinstance(inode.i_type, Dir):
        raise TypeError(f"inode {inode.i_ino} is not a directory")
    return replace(inode, i_type=Dir(f(inode.i_type.entries)))


def is_dir_mode(mode: int) -> bool:
    return mode & S_IFMT == S_IFDIR


def afs_inode_from_vnode(v: Vnode) -> AfsInode:
    if is_dir_mode(v.v_mode):
        content: InodeContent = Dir()
    elif v.v_mode & S_IFREG:
        content = File()
    else:
        raise ValueError(f"mode {v.v_mode:#x} is neither a file nor a directory")
    return AfsInode(content, v.v_ino, v.v_nlink, v.v_size, v.v_mode, v.v_ctime, v.v_mtime)


def vnode_from_inode(inode: AfsInode) -> Vnode:
    return Vnode(inode.i_ino, inode.i_nlink, inode.i_size, inode.i_mode,
                 inode.i_ctime, inode.i_mtime)


def empty_root(mode: int = 0o755, time: int = 0) -> AfsInode:
    return AfsInode(Dir(), ROOT_INO, 2, 0, S_IFDIR | mode, time, time)


def fresh_state(time: int = 0) -> AfsState:
    """A file system holding only an empty root directory."""
    return AfsState(False, time, FrozenMap({ROOT_INO: empty_root(time=time)}), ())


def file_pages(data: bytes) -> tuple:
    """Split file contents into zero-padded pages."""
    pages = []
    for off in range(0, len(data), PAGE_SIZE):
        chunk = data[off:off + PAGE_SIZE]
        pages.append(chunk + bytes(PAGE_SIZE - len(chunk)))
    return tuple(pages)


# -- invariant --------------------------------------------------------------


class Violation(NamedTuple):
    clause: int
    detail: str


def check_invariant(m: Mapping[int, AfsInode]) -> list[Violation]:
    """Every violated clause of the global invariant, in a stable order.

    1. the root exists and is a directory
    2. no directory is the target of more than one entry; the root of none
    3. each inode's ``i_ino`` matches its key
    4. ``i_nlink`` matches the link count (files: entries referencing them,
       directories: 2 + child directories)
    5. inode shape: file pages agree with ``i_size`` and bytes past the end
       are zero; directory ``i_size`` covers the entry costs; mode type bits
       agree with the content kind
    6. every entry targets a mapped inode
    7. every directory is reachable from the root without cycles
    """
    out: list[Violation] = []
    root = m.get(ROOT_INO)
    if root is None:
        out.append(Violation(1, "root inode missing"))
    elif not root.is_dir:
        out.append(Violation(1, "root inode is not a directory"))

    refs: dict[int, int] = {}
    child_dirs: dict[int, int] = {}
    for ino in sorted(m):
        inode = m[ino]
        if inode.i_ino != ino:
            out.append(Violation(3, f"key {ino} holds inode numbered {inode.i_ino}"))
        if not inode.is_dir:
            continue
        for name in sorted(inode.i_type.entries):
            target = inode.i_type.entries[name]
            refs[target] = refs.get(target, 0) + 1
            t = m.get(target)
            if t is None:
                out.append(Violation(6, f"entry {name!r} in {ino} targets unmapped inode {target}"))
            elif t.is_dir:
                child_dirs[ino] = child_dirs.get(ino, 0) + 1

    for ino in sorted(m):
        inode = m[ino]
        if inode.is_dir:
            n = refs.get(ino, 0)
            if ino == ROOT_INO and n:
                out.append(Violation(2, f"root directory referenced by {n} entries"))
            elif n > 1:
                out.append(Violation(2, f"directory {ino} referenced by {n} entries"))
            want = 2 + child_dirs.get(ino, 0)
        else:
            want = refs.get(ino, 0)
        if inode.i_nlink != want:
            out.append(Violation(4, f"inode {ino} has i_nlink {inode.i_nlink}, expected {want}"))
        out.extend(Violation(5, f"inode {ino}: {msg}") for msg in _shape_problems(inode))

    out.extend(_reachability(m))
    return out


def _shape_problems(inode: AfsInode) -> Iterator[str]:
    if inode.is_dir:
        if not is_dir_mode(inode.i_mode):
            yield f"directory mode {inode.i_mode:#x} lacks the directory type"
        cost = sum(entry_size(n) for n in inode.i_type.entries)
        if inode.i_size < cost:
            yield f"directory size {inode.i_size} below entry cost {cost}"
        return
    if not inode.i_mode & S_IFREG:
        yield f"file mode {inode.i_mode:#x} lacks the regular-file bit"
    pages = inode.i_type.pages
    want = -(-inode.i_size // PAGE_SIZE)
    if len(pages) != want:
        yield f"{len(pages)} pages for size {inode.i_size}, expected {want}"
        return
    if any(len(p) != PAGE_SIZE for p in pages):
        yield "page with wrong length"
        return
    tail = inode.i_size % PAGE_SIZE
    if pages and tail and any(pages[-1][tail:]):
        yield "non-zero bytes past end of file"


def _reachability(m: Mapping[int, AfsInode]) -> Iterator[Violation]:
    root = m.get(ROOT_INO)
    if root is None or not root.is_dir:
        return
    seen = {ROOT_INO}
    stack = [ROOT_INO]
    while stack:
        ino = stack.pop()
        for target in m[ino].i_type.entries.values():
            t = m.get(target)
            if t is None or not t.is_dir:
                continue
            if target in seen:
                yield Violation(7, f"directory {target} reached twice (cycle or shared)")
                continue
            seen.add(target)
            stack.append(target)
    for ino in sorted(m):
        if m[ino].is_dir and ino not in seen:
            yield Violation(7, f"directory {ino} unreachable from root")


def invariant_holds(m: Mapping[int, AfsInode]) -> bool:
    return not check_invariant(m)


def lookup_path(m: Mapping[int, AfsInode], path: str) -> Optional[AfsInode]:
    """Resolve an absolute '/'-separated path against a map."""
    if not path.startswith("/"):
        return None
    inode = m.get(ROOT_INO)
    for part in path.split("/"):
        if not part:
            continue
        if inode is None or not inode.is_dir:
            return None
        target = inode.i_type.entries.get(part.encode())
        inode = None if target is None else m.get(target)
    return inode
