"""Syscall naming, CVE annotations, and the bundled policy-comparison table.

The table compares, per syscall, which of seven policies allow it: for each
of the two reference programs (nginx, composepost) a runtime-profile
baseline, the learned (timeloops) policy and a static (sysfilter) policy,
plus the default podman container filter. Rows carry the most recent Linux
kernel CVE associated with the syscall, when one is known.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ParseError, UnknownColumn

SYSCALL_NAME_RE = re.compile(r"^[a-z0-9_]+$")
CVE_RE = re.compile(r"^CVE-\d{4}-\d{1,7}$")

#: The seven policy columns, in canonical order.
COLUMNS = (
    "nginx-baseline",
    "nginx-timeloops",
    "nginx-sysfilter",
    "composepost-baseline",
    "composepost-timeloops",
    "composepost-sysfilter",
    "podman-default",
)

_CSV_FIELDS = ("syscall", "cve") + tuple(c.replace("-", "_") for c in COLUMNS)

#: Name of the comparison table shipped with the package.
DEFAULT_FIXTURE = "policy_comparison.csv"


def validate_syscall_name(name: str) -> str:
    if not isinstance(name, str) or not SYSCALL_NAME_RE.match(name):
        raise ParseError(f"invalid syscall name: {name!r}")
    return name


@dataclass(frozen=True)
class SyscallAnnotation:
    """A syscall together with an optionally associated CVE identifier."""

    syscall: str
    cve: str | None = None

    def __post_init__(self):
        validate_syscall_name(self.syscall)
        if self.cve is not None and not CVE_RE.match(self.cve):
            raise ParseError(f"invalid CVE identifier: {self.cve!r}")


@dataclass(frozen=True)
class TableRow:
    """One syscall row: CVE annotation plus a flag per policy column.

    ``note`` holds free text from the CVE cell that is not a CVE identifier
    (e.g. "numerous drivers"); it is ignored by CVE lookups.
    """

    syscall: str
    cve: str | None
    flags: tuple[bool, ...]
    note: str | None = None

    def __post_init__(self):
        validate_syscall_name(self.syscall)
        if self.cve is not None and not CVE_RE.match(self.cve):
            raise ParseError(f"invalid CVE identifier: {self.cve!r}")
        if self.cve is not None and self.note is not None:
            raise ParseError(f"row {self.syscall!r} cannot carry both a CVE and a note")
        if len(self.flags) != len(COLUMNS):
            raise ParseError(
                f"row {self.syscall!r} has {len(self.flags)} flags, expected {len(COLUMNS)}"
            )

    def flag(self, column: str) -> bool:
        try:
            return self.flags[COLUMNS.index(column)]
        except ValueError:
            raise UnknownColumn(column) from None


@dataclass(frozen=True)
class PolicyComparisonTable:
    """Immutable comparison table keyed by syscall name."""

    rows: tuple[TableRow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        names = [r.syscall for r in self.rows]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ParseError("duplicate syscall rows: " + ", ".join(dupes))

    def __len__(self) -> int:
        return len(self.rows)

    def syscalls(self) -> frozenset[str]:
        return frozenset(r.syscall for r in self.rows)

    def column_policy(self, column: str) -> frozenset[str]:
        """All syscalls flagged as allowed in ``column``."""
        if column not in COLUMNS:
            raise UnknownColumn(column)
        return frozenset(r.syscall for r in self.rows if r.flag(column))

    def cve_for(self, syscall: str) -> str | None:
        """CVE annotation for ``syscall``, or None if absent or unknown."""
        for row in self.rows:
            if row.syscall == syscall:
                return row.cve
        return None


def column_policy(table: PolicyComparisonTable, column: str) -> frozenset[str]:
    return table.column_policy(column)


def cve_for(table: PolicyComparisonTable, syscall: str) -> str | None:
    return table.cve_for(syscall)


def _parse_cve_cell(syscall: str, cell: str) -> tuple[str | None, str | None]:
    cell = cell.strip()
    if not cell:
        return None, None
    if CVE_RE.match(cell):
        return cell, None
    if cell.startswith("CVE-"):
        raise ParseError(f"row {syscall!r}: malformed CVE identifier {cell!r}")
    # Free-text annotation such as "numerous drivers"; kept but never
    # surfaced as a CVE.
    return None, cell


def load_fixture(path: str | Path) -> PolicyComparisonTable:
    """Load a comparison-table CSV (see the bundled fixture for the format)."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_fixture(text)


def parse_fixture(text: str) -> PolicyComparisonTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty fixture file") from None
    if tuple(header) != _CSV_FIELDS:
        raise ParseError(
            "unexpected fixture header: " + ",".join(header)
            + " (unknown or missing columns)"
        )
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(_CSV_FIELDS):
            raise ParseError(f"line {lineno}: expected {len(_CSV_FIELDS)} cells, got {len(cells)}")
        name = cells[0].strip()
        if not SYSCALL_NAME_RE.match(name):
            raise ParseError(f"line {lineno}: invalid syscall name {name!r}")
        cve, note = _parse_cve_cell(name, cells[1])
        flags = []
        for col, cell in zip(COLUMNS, cells[2:]):
            if cell not in ("0", "1"):
                raise ParseError(f"line {lineno}: column {col} must be 0 or 1, got {cell!r}")
            flags.append(cell == "1")
        rows.append(TableRow(syscall=name, cve=cve, flags=tuple(flags), note=note))
    return PolicyComparisonTable(rows=tuple(rows))


def save_fixture(table: PolicyComparisonTable, path: str | Path) -> None:
    Path(path).write_text(render_fixture(table), encoding="utf-8")


def render_fixture(table: PolicyComparisonTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for row in table.rows:
        cve_cell = row.cve or row.note or ""
        writer.writerow([row.syscall, cve_cell] + ["1" if f else "0" for f in row.flags])
    return out.getvalue()


def load_default_fixture() -> PolicyComparisonTable:
    """Load the comparison table shipped inside the package."""
    text = resources.files("timeloops.data").joinpath(DEFAULT_FIXTURE).read_text(encoding="utf-8")
    return parse_fixture(text)


def podman_default_deny(table: PolicyComparisonTable) -> frozenset[str]:
    """Deny-list preset: table syscalls absent from the default podman filter."""
    return table.syscalls() - table.column_policy("podman-default")
