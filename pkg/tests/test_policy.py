import pytest
from hypothesis import given
from hypothesis import strategies as st

from timeloops.errors import DeniedSyscall, ParseError, ReplayError
from timeloops.policy import (
    PolicyLogEntry,
    SyscallPolicy,
    diff,
    export_seccomp,
    extend,
    load_log,
    new_policy,
    replay_log,
    save_log,
)

from conftest import GOLDEN_DIR


def test_new_policy_empty():
    p = new_policy()
    assert p.epoch == 0
    assert p.allow == frozenset()
    assert p.deny == frozenset()


def test_new_policy_denied_syscall_never_allowed():
    p = new_policy({"clock_settime"})
    assert not p.allows("clock_settime")
    p, _ = extend(p, {"read", "write"})
    assert not p.allows("clock_settime")
    with pytest.raises(DeniedSyscall):
        extend(p, {"clock_settime"})


def test_podman_style_deny_from_fixture(table):
    from timeloops.catalog import podman_default_deny

    p = new_policy(podman_default_deny(table))
    assert p.deny == {"clock_settime"}
    assert not p.allows("clock_settime")


def test_extend_disjoint_union():
    p, entry = extend(new_policy(), {"read", "write"}, source="oracle")
    assert p.allow == {"read", "write"}
    assert p.epoch == 1
    assert entry.added == ("read", "write")
    assert entry.source == "oracle"


def test_extend_empty_is_identity():
    p0 = new_policy()
    p, entry = extend(p0, set())
    assert p is p0
    assert entry is None


def test_extend_known_syscalls_is_idempotent():
    p1, _ = extend(new_policy(), {"read"})
    p2, entry = extend(p1, {"read"})
    assert p2 is p1
    assert p2.epoch == 1
    assert entry is None


def test_extend_denied_leaves_policy_unchanged():
    p = new_policy({"clock_settime"})
    with pytest.raises(DeniedSyscall) as excinfo:
        extend(p, {"clock_settime", "read"})
    assert excinfo.value.names == {"clock_settime"}
    assert p.allow == frozenset()
    assert p.epoch == 0


def test_allows_membership():
    p = new_policy()
    assert not p.allows("read")
    p, _ = extend(p, {"read"})
    assert p.allows("read")
    assert not p.allows("write")


def test_allow_deny_overlap_rejected():
    with pytest.raises(ValueError):
        SyscallPolicy(epoch=0, allow=frozenset({"read"}), deny=frozenset({"read"}))


@given(
    batches=st.lists(
        st.lists(st.sampled_from([f"call_{i}" for i in range(8)]), max_size=4),
        max_size=8,
    ),
    deny=st.sets(st.sampled_from(["deny_a", "deny_b"]), max_size=2),
)
def test_extend_sequences_monotone_and_deny_stable(batches, deny):
    p = new_policy(deny)
    seen_epochs = [p.epoch]
    previous = p
    for batch in batches:
        p, entry = extend(p, batch)
        assert previous.allow <= p.allow
        assert p.deny == frozenset(deny)
        for syscall in deny:
            assert not p.allows(syscall)
        if entry is None:
            assert p.allow == previous.allow
            assert p.epoch == previous.epoch
        else:
            assert p.epoch == previous.epoch + 1
            assert set(entry.added) == p.allow - previous.allow
        seen_epochs.append(p.epoch)
        previous = p
    assert seen_epochs == sorted(seen_epochs)


def test_diff_self():
    p, _ = extend(new_policy(), {"read", "write"})
    d = diff(p, p)
    assert d.only_a == frozenset()
    assert d.only_b == frozenset()
    assert d.both == p.allow


def test_diff_fixture_columns(table):
    sysfilter = SyscallPolicy(allow=table.column_policy("nginx-sysfilter"))
    learned = SyscallPolicy(allow=table.column_policy("nginx-timeloops"))
    d = diff(sysfilter, learned)
    assert "chmod" in d.only_a
    assert "times" in d.only_b


@given(
    a=st.sets(st.sampled_from([f"c{i}" for i in range(10)]), max_size=10),
    b=st.sets(st.sampled_from([f"c{i}" for i in range(10)]), max_size=10),
)
def test_diff_partition_properties(a, b):
    pa = SyscallPolicy(allow=frozenset(a))
    pb = SyscallPolicy(allow=frozenset(b))
    d = diff(pa, pb)
    assert d.only_a & d.only_b == frozenset()
    assert d.only_a & d.both == frozenset()
    assert d.only_b & d.both == frozenset()
    assert d.only_a | d.both == pa.allow
    assert d.only_b | d.both == pb.allow


def test_export_empty_policy_matches_golden():
    expected = (GOLDEN_DIR / "profile_empty.json").read_bytes()
    assert export_seccomp(new_policy()) == expected


def test_export_read_write_matches_golden():
    p = SyscallPolicy(epoch=1, allow=frozenset({"read", "write"}))
    expected = (GOLDEN_DIR / "profile_read_write.json").read_bytes()
    assert export_seccomp(p) == expected


def test_export_errno_action_matches_golden():
    p = SyscallPolicy(epoch=1, allow=frozenset({"read", "write"}))
    expected = (GOLDEN_DIR / "profile_errno.json").read_bytes()
    assert export_seccomp(p, default_action="errno") == expected


def test_export_is_deterministic_across_equal_policies():
    p1, _ = extend(new_policy(), {"write", "read"})
    p2, _ = extend(new_policy(), {"read", "write"})
    assert export_seccomp(p1) == export_seccomp(p2)
    assert export_seccomp(p1) == export_seccomp(p1)


def test_export_has_no_trailing_newline_and_sorted_names():
    p, _ = extend(new_policy(), {"write", "accept", "read"})
    raw = export_seccomp(p)
    assert not raw.endswith(b"\n")
    assert b'["accept","read","write"]' in raw


def test_log_round_trip(tmp_path):
    entries = [
        PolicyLogEntry(epoch=1, added=("read",), source="pretrain", timestamp_ms=0.0),
        PolicyLogEntry(epoch=2, added=("openat", "write"), source="oracle", timestamp_ms=12.5),
        PolicyLogEntry(epoch=3, added=("close",), source="oracle", timestamp_ms=99.0),
    ]
    path = tmp_path / "policy.log"
    save_log(entries, path)
    assert load_log(path) == entries


def test_log_key_order_on_disk(tmp_path):
    path = tmp_path / "policy.log"
    save_log([PolicyLogEntry(epoch=1, added=("read",), source="oracle", timestamp_ms=3.0)], path)
    assert path.read_text() == '{"epoch":1,"added":["read"],"source":"oracle","timestamp_ms":3.0}\n'


def test_log_replay_reconstructs_policy():
    entries = [
        PolicyLogEntry(epoch=1, added=("read", "write"), source="oracle"),
        PolicyLogEntry(epoch=2, added=("openat",), source="oracle"),
    ]
    p = replay_log(entries)
    assert p.allow == {"read", "write", "openat"}
    assert p.epoch == 2


def test_log_with_repeated_epochs_is_replay_error(tmp_path):
    path = tmp_path / "policy.log"
    path.write_text(
        '{"epoch":1,"added":["read"],"source":"oracle","timestamp_ms":0.0}\n'
        '{"epoch":1,"added":["write"],"source":"oracle","timestamp_ms":1.0}\n'
    )
    with pytest.raises(ReplayError):
        load_log(path)


def test_replay_epoch_gap_is_replay_error():
    entries = [
        PolicyLogEntry(epoch=1, added=("read",), source="oracle"),
        PolicyLogEntry(epoch=3, added=("write",), source="oracle"),
    ]
    with pytest.raises(ReplayError):
        replay_log(entries)


def test_replay_readded_syscall_is_replay_error():
    entries = [
        PolicyLogEntry(epoch=1, added=("read",), source="oracle"),
        PolicyLogEntry(epoch=2, added=("read", "write"), source="oracle"),
    ]
    with pytest.raises(ReplayError):
        replay_log(entries)


def test_malformed_log_line_is_parse_error(tmp_path):
    path = tmp_path / "policy.log"
    path.write_text('{"epoch":1,"added":["read"]}\n')
    with pytest.raises(ParseError):
        load_log(path)


def test_log_entry_must_be_sorted_and_non_empty():
    with pytest.raises(ValueError):
        PolicyLogEntry(epoch=1, added=(), source="oracle")
    with pytest.raises(ValueError):
        PolicyLogEntry(epoch=1, added=("write", "read"), source="oracle")
