import random
from dataclasses import replace

import pytest
from hypothesis import strategies as st

from bilbyafs import nondet as nd
from bilbyafs.model import (
    ROOT_INO,
    S_IFREG,
    AfsInode,
    AfsState,
    Dir,
    File,
    UpdateRecord,
    apply_update,
    entry_size,
    fresh_state,
)

NAME_POOL = [b"a", b"b", b"c", b"d", b"e", b"f", b"g"]


def create_record(view, name, ino, time):
    root = view[ROOT_INO]
    child = AfsInode(File(), ino, 1, 0, S_IFREG | 0o644, time, time)
    parent = replace(root, i_type=Dir(root.i_type.entries.set(name, ino)),
                     i_size=root.i_size + entry_size(name), i_ctime=time, i_mtime=time)
    return UpdateRecord.put(child, parent)


def unlink_record(view, name, time):
    root = view[ROOT_INO]
    ino = root.i_type.entries[name]
    parent = replace(root, i_type=Dir(root.i_type.entries.delete(name)),
                     i_size=root.i_size - entry_size(name), i_ctime=time, i_mtime=time)
    return UpdateRecord(((ROOT_INO, parent), (ino, None)))


def next_record(rng, view, time):
    """A record that keeps the root-only file system well formed."""
    names = view[ROOT_INO].i_type.entries
    free = [n for n in NAME_POOL if n not in names]
    if names and (not free or rng.random() < 0.35):
        return unlink_record(view, rng.choice(sorted(names)), time)
    ino = 2
    while ino in view:
        ino += 1
    return create_record(view, rng.choice(free), ino, time)


def random_state(rng, max_pending=5):
    """Well-formed state: a few files on the medium and some pending records."""
    view = fresh_state().a_medium_afs
    t = 0
    for _ in range(rng.randint(0, 4)):
        t += 10
        view = apply_update(next_record(rng, view, t), view)
    medium = view
    pending = []
    for _ in range(rng.randint(0, max_pending)):
        t += 10
        u = next_record(rng, view, t)
        pending.append(u)
        view = apply_update(u, view)
    return AfsState(False, t + 5, medium, tuple(pending)), view


@pytest.fixture
def rng():
    return random.Random(1234)


# -- outcome trees --

CONTINUATIONS = [
    lambda x: nd.pure(x + 1),
    lambda x: nd.select([x, 2 * x]),
    lambda x: nd.choice(nd.pure(x), nd.pure(-x)),
    lambda x: nd.empty() if x % 3 == 0 else nd.pure(x),
    lambda x: nd.select([x % 4, 7]),
]


def finite_trees(max_leaves=8):
    leaves = st.one_of(
        st.integers(-5, 5).map(nd.pure),
        st.lists(st.integers(-5, 5), min_size=1, max_size=4).map(nd.select),
        st.just(nd.empty()),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda p: nd.choice(*p)),
            st.tuples(children, st.integers(0, len(CONTINUATIONS) - 1)).map(
                lambda p: nd.bind(p[0], CONTINUATIONS[p[1]])),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def denote(tree):
    """Set semantics computed directly from the definitions."""
    if isinstance(tree, nd.Return):
        return {tree.value}
    if isinstance(tree, nd.Choice):
        return denote(tree.left) | denote(tree.right)
    if isinstance(tree, nd.SelectFinite):
        return set(tree.candidates)
    if isinstance(tree, nd.SelectPredicate):
        assert tree.complete
        return set(tree.sampler())
    out = set()
    for r in denote(tree.inner):
        out |= denote(tree.cont(r))
    return out


# -- acceptance reporting --

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
