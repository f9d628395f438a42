import pytest
from hypothesis import given
from hypothesis import strategies as st

from timeloops.catalog import (
    COLUMNS,
    CVE_RE,
    PolicyComparisonTable,
    TableRow,
    load_fixture,
    parse_fixture,
    podman_default_deny,
    render_fixture,
    save_fixture,
)
from timeloops.errors import ParseError, UnknownColumn

HEADER = (
    "syscall,cve,nginx_baseline,nginx_timeloops,nginx_sysfilter,"
    "composepost_baseline,composepost_timeloops,composepost_sysfilter,podman_default"
)


def test_shmat_row(table):
    row = next(r for r in table.rows if r.syscall == "shmat")
    assert row.cve == "CVE-2017-5669"
    assert table.column_policy("nginx-sysfilter") >= {"shmat"}
    assert table.column_policy("podman-default") >= {"shmat"}
    for column in ("nginx-baseline", "nginx-timeloops", "composepost-baseline",
                   "composepost-timeloops", "composepost-sysfilter"):
        assert "shmat" not in table.column_policy(column)


def test_open_row(table):
    assert "open" in table.column_policy("nginx-timeloops")
    assert "open" not in table.column_policy("nginx-baseline")
    assert "open" not in table.column_policy("nginx-sysfilter")
    assert table.cve_for("open") == "CVE-2020-8428"


def test_cve_lookups(table):
    assert table.cve_for("mremap") == "CVE-2020-10757"
    assert table.cve_for("write") is None
    assert table.cve_for("not_a_syscall") is None


def test_ioctl_free_text_is_note_not_cve(table):
    row = next(r for r in table.rows if r.syscall == "ioctl")
    assert row.cve is None
    assert row.note == "numerous drivers"
    assert table.cve_for("ioctl") is None


def test_all_cves_match_regex(table):
    for row in table.rows:
        if row.cve is not None:
            assert CVE_RE.match(row.cve), row.syscall


def test_timeloops_columns_superset_of_baseline(table):
    for program in ("nginx", "composepost"):
        baseline = table.column_policy(f"{program}-baseline")
        learned = table.column_policy(f"{program}-timeloops")
        assert baseline <= learned


def test_podman_column_excludes_clock_settime(table):
    assert "clock_settime" not in table.column_policy("podman-default")
    assert podman_default_deny(table) == {"clock_settime"}


def test_column_policy_on_empty_table():
    empty = PolicyComparisonTable()
    for column in COLUMNS:
        assert empty.column_policy(column) == frozenset()


def test_unknown_column(table):
    with pytest.raises(UnknownColumn):
        table.column_policy("nginx-unknown")


def test_empty_fixture_is_parse_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_fixture(path)


def test_bad_header_is_parse_error():
    with pytest.raises(ParseError):
        parse_fixture("syscall,cve,bogus\nread,,1\n")


def test_duplicate_syscall_is_parse_error():
    text = HEADER + "\nread,,1,1,1,1,1,1,1\nread,,0,0,0,0,0,0,1\n"
    with pytest.raises(ParseError):
        parse_fixture(text)


def test_bad_flag_cell_is_parse_error():
    text = HEADER + "\nread,,1,1,x,1,1,1,1\n"
    with pytest.raises(ParseError):
        parse_fixture(text)


def test_malformed_cve_is_parse_error():
    text = HEADER + "\nread,CVE-17-5669,1,1,1,1,1,1,1\n"
    with pytest.raises(ParseError):
        parse_fixture(text)


def test_shipped_fixture_round_trips(table, tmp_path):
    path = tmp_path / "copy.csv"
    save_fixture(table, path)
    assert load_fixture(path) == table


_names = st.lists(
    st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True),
    min_size=0, max_size=12, unique=True,
)
# annotation: nothing, a CVE id, or free text that cannot parse as a CVE
_annotations = st.one_of(
    st.just((None, None)),
    st.from_regex(r"CVE-\d{4}-\d{1,7}", fullmatch=True).map(lambda c: (c, None)),
    st.from_regex(r"[a-z][a-z ,]{0,15}[a-z]", fullmatch=True).map(lambda n: (None, n)),
)


@given(names=_names, data=st.data())
def test_round_trip_random_tables(names, data):
    rows = []
    for name in names:
        cve, note = data.draw(_annotations)
        flags = tuple(data.draw(st.booleans()) for _ in COLUMNS)
        rows.append(TableRow(syscall=name, cve=cve, flags=flags, note=note))
    original = PolicyComparisonTable(rows=tuple(rows))
    assert parse_fixture(render_fixture(original)) == original


def test_row_cannot_carry_both_cve_and_note():
    with pytest.raises(ParseError):
        TableRow(syscall="read", cve="CVE-2020-8428",
                 flags=tuple([False] * len(COLUMNS)), note="also free text")
