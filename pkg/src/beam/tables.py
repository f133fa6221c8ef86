"""Static lookup tables for pattern guards.

Columnar text format: a header line naming the columns, then one row per
line, whitespace separated.  The first column is the key; a membership
check ``X in table(T, K)`` is true when some row has key K and X among its
remaining cells.  Cells are compared as canonical strings.
"""

from __future__ import annotations


class TableError(ValueError):
    pass


class Table:
    def __init__(self, name: str, columns: list[str], rows: list[tuple[str, ...]]):
        self.name = name
        self.columns = columns
        self.rows = rows
        self._index: dict[str, set[str]] = {}
        for row in rows:
            self._index.setdefault(row[0], set()).update(row[1:])

    def contains(self, key: str, member: str) -> bool:
        return member in self._index.get(key, ())

    def __repr__(self):
        return f"Table({self.name!r}, {len(self.rows)} rows)"


def load_table(name: str, path) -> Table:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise TableError(f"table {name!r}: empty file {path}")
    columns = lines[0].split()
    if len(columns) < 2:
        raise TableError(f"table {name!r}: need at least a key and one value column")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = tuple(line.split())
        if len(cells) != len(columns):
            raise TableError(f"table {name!r} line {i}: expected {len(columns)} cells, got {len(cells)}")
        rows.append(cells)
    return Table(name, columns, rows)
