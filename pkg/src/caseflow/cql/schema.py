"""Stream and table schemas plus the keyed in-memory table store."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from caseflow.events import format_scalar


class SchemaError(ValueError):
    """Malformed schema or schema violation on write."""


FieldType = str  # one of: int, string, bool, float, map, timestamp

_VALID_TYPES = {"int", "string", "bool", "float", "map", "timestamp"}


def _type_ok(ftype: FieldType, value: Any) -> bool:
    if ftype == "int" or ftype == "timestamp":
        return isinstance(value, int) and not isinstance(value, bool)
    if ftype == "string":
        return isinstance(value, str)
    if ftype == "bool":
        return isinstance(value, bool)
    if ftype == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if ftype == "map":
        return isinstance(value, dict)
    return False


@dataclass(frozen=True)
class SchemaDef:
    """Named stream or table schema.

    ``keys`` names the primary-key fields and applies to tables only;
    streams never carry keys.
    """

    name: str
    fields: tuple[tuple[str, FieldType], ...]
    keys: tuple[str, ...] = ()
    kind: str = "table"  # "table" | "stream"

    def __post_init__(self) -> None:
        if self.kind not in ("table", "stream"):
            raise SchemaError(f"unknown schema kind {self.kind!r}")
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate field names in schema {self.name!r}")
        for fname, ftype in self.fields:
            if ftype not in _VALID_TYPES:
                raise SchemaError(f"unknown field type {ftype!r} for {fname!r}")
        if self.kind == "stream" and self.keys:
            raise SchemaError("streams have no keys")
        if self.kind == "table" and not self.keys:
            raise SchemaError(f"table {self.name!r} requires key fields")
        missing = set(self.keys) - set(names)
        if missing:
            raise SchemaError(f"key fields {sorted(missing)} not in schema {self.name!r}")

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def field_type(self, name: str) -> FieldType:
        for fname, ftype in self.fields:
            if fname == name:
                return ftype
        raise SchemaError(f"no field {name!r} in schema {self.name!r}")


Row = dict[str, Any]


@dataclass
class Table:
    """Keyed row store; at most one row per primary-key value."""

    schema: SchemaDef
    rows: dict[tuple, Row] = field(default_factory=dict)

    def key_of(self, row: Row) -> tuple:
        return tuple(row[k] for k in self.schema.keys)

    def validate_row(self, row: Row) -> None:
        for fname, ftype in self.schema.fields:
            if fname not in row:
                raise SchemaError(f"row missing field {fname!r} for table {self.schema.name!r}")
            if not _type_ok(ftype, row[fname]):
                raise SchemaError(
                    f"field {fname!r} of table {self.schema.name!r} expects {ftype}, "
                    f"got {type(row[fname]).__name__}"
                )
        extra = set(row) - set(self.schema.field_names)
        if extra:
            raise SchemaError(f"unknown fields {sorted(extra)} for table {self.schema.name!r}")

    def get(self, key: tuple) -> Row | None:
        return self.rows.get(key)

    def insert(self, row: Row) -> tuple:
        self.validate_row(row)
        key = self.key_of(row)
        if key in self.rows:
            raise SchemaError(f"duplicate key {key!r} in table {self.schema.name!r}")
        self.rows[key] = dict(row)
        return key

    def upsert(self, row: Row) -> tuple[str, tuple]:
        """Insert or overwrite by key; returns ("insert"|"update", key)."""
        self.validate_row(row)
        key = self.key_of(row)
        action = "update" if key in self.rows else "insert"
        self.rows[key] = dict(row)
        return action, key

    def delete(self, key: tuple) -> bool:
        return self.rows.pop(key, None) is not None

    def scan(self) -> Iterator[Row]:
        return iter(list(self.rows.values()))

    def select(self, **equals: Any) -> list[Row]:
        """Rows matching field equality constraints, PK-indexed when possible."""
        if set(self.schema.keys) <= set(equals):
            key = tuple(equals[k] for k in self.schema.keys)
            row = self.rows.get(key)
            if row is None:
                return []
            if all(row.get(f) == v for f, v in equals.items()):
                return [row]
            return []
        return [r for r in self.scan() if all(r.get(f) == v for f, v in equals.items())]

    def snapshot_csv(self) -> str:
        """Sorted CSV dump of the table for debugging and replay comparison."""
        header = ",".join(self.schema.field_names)
        lines = []
        for row in self.rows.values():
            cells = []
            for fname, ftype in self.schema.fields:
                value = row[fname]
                if ftype == "map":
                    cells.append(
                        "{" + " ".join(f"{k}={format_scalar(value[k])};" for k in sorted(value)) + "}"
                    )
                elif isinstance(value, bool):
                    cells.append("true" if value else "false")
                else:
                    cells.append(str(value))
            lines.append(",".join(cells))
        return "\n".join([header, *sorted(lines)])


def build_rows(columns: Iterable[str], values: Iterable[Iterable[Any]]) -> list[Row]:
    cols = list(columns)
    return [dict(zip(cols, vals)) for vals in values]
