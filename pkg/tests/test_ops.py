import random
from dataclasses import replace

from hypothesis import given, settings, strategies as st

from bilbyafs.model import (
    ROOT_INO,
    S_IFREG,
    SUCCESS,
    U64_MAX,
    AfsInode,
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
    invariant_holds,
    updated_afs,
    vnode_from_inode,
)
from bilbyafs.nondet import EnumBudget, contains, enumerate_outcomes
from bilbyafs.ops import (
    CreateResult,
    InitOutcome,
    UnlinkResult,
    afs_create,
    afs_fsync,
    afs_init_inode,
    afs_lookup,
    afs_unlink,
    read_afs_inode,
)

from conftest import create_record, random_state

BLANK = Vnode()
B2 = EnumBudget(max_predicate_samples=2)


def root_vnode(s):
    return vnode_from_inode(updated_afs(s)[ROOT_INO])


def outcomes(tree, budget=EnumBudget()):
    return set(enumerate_outcomes(tree, budget).values)


def with_file(name=b"a", pending=False, nlink=1):
    s = fresh_state(time=5)
    u = create_record(s.a_medium_afs, name, 2, 5)
    if nlink != 1:
        child = replace(u.bindings[0][1], i_nlink=nlink)
        u = UpdateRecord(((2, child), u.bindings[1]))
    if pending:
        return replace(s, a_medium_updates=(u,))
    return replace(s, a_medium_afs=apply_update(u, s.a_medium_afs))


class TestInitInode:
    def test_no_free_number_only_error(self):
        s = fresh_state()
        m = s.a_medium_afs
        for n in range(2, 6):
            m = m.set(n, AfsInode(File(), n, 0, 0, S_IFREG))
        s = replace(s, a_medium_afs=m)
        res = outcomes(afs_init_inode(s, root_vnode(s), BLANK, S_IFREG, max_ino=5))
        assert res == {InitOutcome(False, s, BLANK)}

    def test_fresh_fs_allocates(self):
        s = fresh_state(time=9)
        res = outcomes(afs_init_inode(s, root_vnode(s), BLANK, S_IFREG | 0o644), B2)
        ok = sorted(o.vnode.v_ino for o in res if o.ok)
        assert ok == [2, 3]
        v = next(o.vnode for o in res if o.ok and o.vnode.v_ino == 2)
        assert v == Vnode(2, 1, 0, S_IFREG | 0o644, 9, 9)

    def test_never_collides(self):
        s = with_file()
        tree = afs_init_inode(s, root_vnode(s), BLANK, S_IFREG)
        for n in (ROOT_INO, 2):
            assert not contains(tree, InitOutcome(True, s, Vnode(n, 1, 0, S_IFREG, 5, 5)))
        assert contains(tree, InitOutcome(True, s, Vnode(2**32 - 1, 1, 0, S_IFREG, 5, 5)))
        assert not contains(tree, InitOutcome(True, s, Vnode(2**32, 1, 0, S_IFREG, 5, 5)))
        assert not contains(tree, InitOutcome(True, s, Vnode(3, 2, 0, S_IFREG, 5, 5)))


class TestReadInode:
    def test_root_on_fresh(self):
        s = fresh_state()
        assert Success(s.a_medium_afs[ROOT_INO]) in outcomes(read_afs_inode(s, ROOT_INO))

    def test_unmapped(self):
        res = outcomes(read_afs_inode(fresh_state(), 42))
        assert res == {Error(ErrorCode.EIO), Error(ErrorCode.ENOMEM)}

    def test_sees_pending_create(self):
        s = with_file(pending=True)
        assert any(isinstance(r, Success) for r in outcomes(read_afs_inode(s, 2)))


class TestCreate:
    def test_readonly(self):
        s = replace(fresh_state(), a_is_readonly=True)
        res = enumerate_outcomes(afs_create(s, root_vnode(s), b"x", 0o644, BLANK))
        assert res.values == (CreateResult(s, root_vnode(s), BLANK, Error(ErrorCode.EROFS)),)
        assert not res.truncated

    def test_fresh_outcomes_match_hand_list(self):
        s = fresh_state(time=3)
        vdir = root_vnode(s)
        name, mode = b"jiggle", 0o644
        got = outcomes(afs_create(s, vdir, name, mode, BLANK), B2)

        want = {CreateResult(s, vdir, BLANK, Error(ErrorCode.ENFILE))}
        root = s.a_medium_afs[ROOT_INO]
        for n in (2, 3):
            vn = Vnode(n, 1, 0, mode | S_IFREG, 3, 3)
            for code in (ErrorCode.EIO, ErrorCode.ENOMEM, ErrorCode.ENAMETOOLONG,
                         ErrorCode.EOVERFLOW, ErrorCode.ENOSPC):
                want.add(CreateResult(s, vdir, vn, Error(code)))
            for sz in (entry_size(name), entry_size(name) + 1):
                child = AfsInode(File(), n, 1, 0, mode | S_IFREG, 3, 3)
                parent = AfsInode(Dir(FrozenMap({name: n})), ROOT_INO, 2, sz,
                                  root.i_mode, 3, 3)
                u = UpdateRecord(((n, child), (ROOT_INO, parent)))
                vdir2 = Vnode(ROOT_INO, 2, sz, root.i_mode, 3, 3)
                buffered = replace(s, a_medium_updates=(u,))
                written = replace(s, a_medium_afs=apply_update(u, s.a_medium_afs))
                want.add(CreateResult(buffered, vdir2, vn, SUCCESS))
                want.add(CreateResult(written, vdir2, vn, SUCCESS))
        assert len(want) == 19
        assert got == want

    def test_success_adds_exactly_two_bindings(self):
        s = with_file(b"tmp", pending=True)
        before = updated_afs(s)
        vdir = root_vnode(s)
        for o in outcomes(afs_create(s, vdir, b"jiggle", 0o600, BLANK), B2):
            after = updated_afs(o.state)
            if isinstance(o.result, Error):
                assert after == before
                continue
            ino = o.vnode.v_ino
            changed = {k for k in set(before) | set(after) if before.get(k) != after.get(k)}
            assert changed == {ROOT_INO, ino}
            assert after[ino].i_nlink == 1 and after[ino].i_type == File(())
            assert after[ROOT_INO].i_type.entries == before[ROOT_INO].i_type.entries.set(b"jiggle", ino)
            assert after[ROOT_INO].i_size > before[ROOT_INO].i_size
            assert o.vdir.v_size == after[ROOT_INO].i_size
            assert invariant_holds(after)

    def test_any_larger_size_is_admitted(self):
        s = fresh_state()
        vdir = root_vnode(s)
        tree = afs_create(s, vdir, b"a", 0o644, BLANK)

        def success_with(sz):
            vn = Vnode(2, 1, 0, 0o644 | S_IFREG, 0, 0)
            root = s.a_medium_afs[ROOT_INO]
            parent = replace(root, i_type=Dir(FrozenMap({b"a": 2})), i_size=sz)
            u = UpdateRecord.put(AfsInode(File(), 2, 1, 0, vn.v_mode), parent)
            return CreateResult(replace(s, a_medium_updates=(u,)),
                                replace(vdir, v_size=sz), vn, SUCCESS)

        assert contains(tree, success_with(vdir.v_size + 1))
        assert contains(tree, success_with(10**15))
        assert not contains(tree, success_with(vdir.v_size))

    def test_size_must_exceed_vdir(self):
        s = fresh_state()
        vdir = replace(root_vnode(s), v_size=U64_MAX)
        res = outcomes(afs_create(s, vdir, b"a", 0o644, BLANK), B2)
        assert not any(isinstance(o.result, Success) for o in res)
        assert any(o.result == Error(ErrorCode.EOVERFLOW) for o in res)
        # update errors need some size to exist first
        assert not any(o.result == Error(ErrorCode.ENOSPC) for o in res)

    def test_error_membership(self):
        s = with_file(b"x", pending=True)
        vdir = root_vnode(s)
        tree = afs_create(s, vdir, b"y", 0o644, BLANK)
        vn = Vnode(7, 1, 0, 0o644 | S_IFREG, s.a_current_time, s.a_current_time)
        assert contains(tree, CreateResult(s, vdir, vn, Error(ErrorCode.ENOSPC)))
        assert contains(tree, CreateResult(s, vdir, vn, Error(ErrorCode.ENAMETOOLONG)))
        assert contains(tree, CreateResult(s, vdir, BLANK, Error(ErrorCode.ENFILE)))
        assert not contains(tree, CreateResult(s, vdir, BLANK, Error(ErrorCode.ENOSPC)))
        assert not contains(tree, CreateResult(s, vdir, vn, Error(ErrorCode.EROFS)))
        taken = replace(vn, v_ino=2)
        assert not contains(tree, CreateResult(s, vdir, taken, Error(ErrorCode.EIO)))
        # after an error the pending create of x must survive
        dropped = replace(s, a_medium_updates=())
        assert not contains(tree, CreateResult(dropped, vdir, vn, Error(ErrorCode.EIO)))


class TestFsync:
    def pending2(self):
        s = fresh_state()
        u1 = create_record(s.a_medium_afs, b"a", 2, 1)
        u2 = create_record(apply_update(u1, s.a_medium_afs), b"b", 3, 2)
        return replace(s, a_medium_updates=(u1, u2))

    def test_nothing_pending(self):
        s = fresh_state()
        assert outcomes(afs_fsync(s)) == {(s, SUCCESS)}

    def test_readonly(self):
        s = replace(self.pending2(), a_is_readonly=True)
        assert outcomes(afs_fsync(s)) == {(s, Error(ErrorCode.EROFS))}

    def test_two_pending(self):
        s = self.pending2()
        res = outcomes(afs_fsync(s))
        assert len(res) == 9
        successes = [o for o, r in res if r == SUCCESS]
        assert len(successes) == 1
        assert successes[0].a_medium_updates == ()
        assert successes[0].a_medium_afs == updated_afs(s)
        for o, r in res:
            if r == Error(ErrorCode.EIO):
                assert o.a_is_readonly
            elif isinstance(r, Error):
                assert not o.a_is_readonly
                assert o.a_medium_updates

    def test_eio_must_set_readonly(self):
        s = self.pending2()
        tree = afs_fsync(s)
        assert contains(tree, (replace(s, a_is_readonly=True), Error(ErrorCode.EIO)))
        assert not contains(tree, (s, Error(ErrorCode.EIO)))
        assert not contains(tree, (replace(s, a_is_readonly=True), Error(ErrorCode.ENOSPC)))
        full = replace(s, a_medium_afs=updated_afs(s), a_medium_updates=())
        assert not contains(tree, (full, Error(ErrorCode.ENOSPC)))


class TestLookup:
    def test_after_unsynced_create(self):
        s = with_file(b"jiggle", pending=True)
        res = outcomes(afs_lookup(s, root_vnode(s), b"jiggle"))
        assert Success(vnode_from_inode(updated_afs(s)[2])) in res
        assert Error(ErrorCode.EIO) in res and Error(ErrorCode.ENOMEM) in res

    def test_empty_root(self):
        s = fresh_state()
        assert outcomes(afs_lookup(s, root_vnode(s), b"a")) == {Error(ErrorCode.ENOENT)}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_vnode_mirrors_inode(self, seed):
        s, view = random_state(random.Random(seed))
        for name, ino in view[ROOT_INO].i_type.entries.items():
            ok = [r.value for r in outcomes(afs_lookup(s, root_vnode(s), name))
                  if isinstance(r, Success)]
            inode = view[ino]
            assert ok == [Vnode(inode.i_ino, inode.i_nlink, inode.i_size, inode.i_mode,
                                inode.i_ctime, inode.i_mtime)]


class TestUnlink:
    def test_only_link_removes_target(self):
        s = with_file(b"a")
        res = outcomes(afs_unlink(s, root_vnode(s), b"a"))
        succ = [o for o in res if o.result == SUCCESS]
        assert succ
        for o in succ:
            after = updated_afs(o.state)
            assert 2 not in after and b"a" not in after[ROOT_INO].i_type.entries
            assert after[ROOT_INO].i_size == 0
            assert invariant_holds(after)

    def test_errors_leave_state(self):
        s = with_file(b"a", pending=True)
        before = updated_afs(s)
        for o in outcomes(afs_unlink(s, root_vnode(s), b"a")):
            if isinstance(o.result, Error):
                assert updated_afs(o.state) == before
                assert o.vdir == root_vnode(s)

    def test_create_then_unlink_restores(self):
        s = fresh_state(time=1)
        created = [o for o in outcomes(afs_create(s, root_vnode(s), b"a", 0o644, BLANK), B2)
                   if o.result == SUCCESS and o.state.a_medium_updates]
        assert created
        for c in created:
            s2 = replace(c.state, a_current_time=1)
            for o in outcomes(afs_unlink(s2, root_vnode(s2), b"a")):
                if o.result == SUCCESS and updated_afs(o.state)[ROOT_INO].i_size == 0:
                    after = updated_afs(o.state)
                    assert after == s.a_medium_afs
                    assert invariant_holds(after)

    def test_missing_name(self):
        s = with_file(b"a")
        assert outcomes(afs_unlink(s, root_vnode(s), b"zz")) == {
            UnlinkResult(s, root_vnode(s), Error(ErrorCode.ENOENT))}

    def test_readonly(self):
        s = replace(with_file(b"a"), a_is_readonly=True)
        assert outcomes(afs_unlink(s, root_vnode(s), b"a")) == {
            UnlinkResult(s, root_vnode(s), Error(ErrorCode.EROFS))}

    def test_hardlinked_file_survives(self):
        s = with_file(b"a", nlink=2)
        for o in outcomes(afs_unlink(s, root_vnode(s), b"a")):
            if o.result == SUCCESS:
                assert updated_afs(o.state)[2].i_nlink == 1


# -- soundness: membership agrees with enumeration where the set is finite --


def perturbations(x):
    """Nearby values that are usually not outcomes."""
    if isinstance(x, tuple):
        s, r = x
        yield (replace(s, a_is_readonly=not s.a_is_readonly), r)
        yield (s, Error(ErrorCode.EOVERFLOW) if r == SUCCESS else SUCCESS)
        yield (replace(s, a_medium_updates=s.a_medium_updates[1:]), r)
    elif isinstance(x, UnlinkResult):
        yield replace(x, result=Error(ErrorCode.EROFS))
        yield replace(x, vdir=replace(x.vdir, v_size=x.vdir.v_size + 1))
        yield replace(x, state=replace(x.state, a_medium_updates=x.state.a_medium_updates[:-1]))
    elif isinstance(x, CreateResult):
        yield replace(x, vnode=replace(x.vnode, v_nlink=x.vnode.v_nlink + 1))
        yield replace(x, result=Error(ErrorCode.EROFS))
        yield replace(x, vdir=replace(x.vdir, v_size=x.vdir.v_size + 5))
        yield replace(x, state=replace(x.state, a_is_readonly=True))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_membership_sound_for_finite_ops(seed):
    rng = random.Random(seed)
    s, view = random_state(rng, max_pending=3)
    vdir = root_vnode(s)
    names = sorted(view[ROOT_INO].i_type.entries) + [b"zz"]
    trees = [afs_fsync(s), afs_unlink(s, vdir, rng.choice(names)),
             afs_lookup(s, vdir, rng.choice(names))]
    for tree in trees:
        res = enumerate_outcomes(tree)
        assert not res.truncated
        for x in res.values:
            assert contains(tree, x)
            for y in perturbations(x):
                assert contains(tree, y) == (y in res.values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_membership_sound_for_create(seed):
    rng = random.Random(seed)
    s, view = random_state(rng, max_pending=3)
    vdir = root_vnode(s)
    free = [n for n in (b"p", b"q") if n not in view[ROOT_INO].i_type.entries]
    tree = afs_create(s, vdir, free[0], 0o644, BLANK)
    small = enumerate_outcomes(tree, EnumBudget(max_predicate_samples=2)).values
    wide = set(enumerate_outcomes(tree, EnumBudget(max_predicate_samples=12)).values)
    for x in small:
        assert contains(tree, x)
        for y in perturbations(x):
            # perturbed values stay within the sampled ranges of ``wide``
            assert contains(tree, y) == (y in wide)
