"""Relational dataset schemata and instances.

A schema is a set of tables. Each table has propositional attributes
(numerical or categorical scalars) and relational attributes (sets of row
references into a fixed target table). One table is the root: its rows carry
the label to predict.

Instances are stored column-wise. Numerical values are float64 arrays with
NaN as the missing marker; categorical values are object arrays of ``str`` or
``None``. Relation values are kept as tuples of row ids so that dangling
references survive loading and can be reported by :func:`validate_instance`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
PROP_KINDS = (NUMERICAL, CATEGORICAL)

BINARY = "binary"
MULTICLASS = "multiclass"
REGRESSION = "regression"
TASKS = (BINARY, MULTICLASS, REGRESSION)

_NUMBER_RE = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")


class SchemaError(ValueError):
    pass


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = NUMERICAL


@dataclass(frozen=True)
class Relation:
    name: str
    target: str


@dataclass(frozen=True)
class Label:
    name: str
    task: str


@dataclass(frozen=True)
class TableDef:
    name: str
    props: tuple[Attribute, ...] = ()
    rels: tuple[Relation, ...] = ()
    label: Label | None = None

    def prop(self, name: str) -> Attribute:
        for a in self.props:
            if a.name == name:
                return a
        raise KeyError(f"table {self.name!r} has no attribute {name!r}")

    def relation(self, name: str) -> Relation:
        for r in self.rels:
            if r.name == name:
                return r
        raise KeyError(f"table {self.name!r} has no relation {name!r}")


@dataclass(frozen=True)
class Schema:
    """Tables plus the name of the labeled root table.

    All invariants are checked on construction, so a ``Schema`` object is
    always valid.
    """

    tables: tuple[TableDef, ...]
    root: str

    def __post_init__(self):
        names = [t.name for t in self.tables]
        for n in names:
            if not isinstance(n, str) or not n:
                raise SchemaError("table names must be non-empty strings")
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SchemaError(f"duplicate table name(s): {sorted(dup)}")
        if self.root not in names:
            raise SchemaError(f"root table {self.root!r} is not declared")
        for t in self.tables:
            attr_names = [a.name for a in t.props] + [r.name for r in t.rels]
            dup = {n for n in attr_names if attr_names.count(n) > 1}
            if dup:
                raise SchemaError(f"duplicate attribute name(s) in table {t.name!r}: {sorted(dup)}")
            if "id" in attr_names:
                raise SchemaError(f"table {t.name!r}: 'id' is reserved for the row id column")
            for a in t.props:
                if not a.name:
                    raise SchemaError(f"table {t.name!r}: empty attribute name")
                if a.kind not in PROP_KINDS:
                    raise SchemaError(f"table {t.name!r}: attribute {a.name!r} has unknown kind {a.kind!r}")
            for r in t.rels:
                if not r.name:
                    raise SchemaError(f"table {t.name!r}: empty relation name")
                if r.target not in names:
                    raise SchemaError(
                        f"table {t.name!r}: relation {r.name!r} targets unknown table {r.target!r}"
                    )
            if t.label is not None:
                if t.name != self.root:
                    raise SchemaError(f"table {t.name!r} declares a label but is not the root")
                if t.label.task not in TASKS:
                    raise SchemaError(f"unknown task {t.label.task!r}")
                if t.label.name in attr_names or t.label.name == "id":
                    raise SchemaError(f"label name {t.label.name!r} collides with an attribute")
        if self.table(self.root).label is None:
            raise SchemaError(f"root table {self.root!r} declares no label")

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(f"unknown table {name!r}")

    @property
    def root_table(self) -> TableDef:
        return self.table(self.root)

    @property
    def label(self) -> Label:
        return self.root_table.label  # type: ignore[return-value]

    def to_dict(self) -> dict:
        tables = []
        for t in self.tables:
            d: dict[str, Any] = {
                "name": t.name,
                "props": [{"name": a.name, "kind": a.kind} for a in t.props],
                "rels": [{"name": r.name, "target": r.target} for r in t.rels],
            }
            if t.label is not None:
                d["label"] = {"name": t.label.name, "task": t.label.task}
            tables.append(d)
        return {"tables": tables, "root": self.root}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def schema_from_dict(doc: Mapping) -> Schema:
    if not isinstance(doc, Mapping):
        raise SchemaError("schema document must be a JSON object")
    if "tables" not in doc or not isinstance(doc["tables"], list):
        raise SchemaError("schema document needs a 'tables' list")
    if "root" not in doc:
        raise SchemaError("schema document needs a 'root' table name")
    tables = []
    for i, t in enumerate(doc["tables"]):
        if not isinstance(t, Mapping) or "name" not in t:
            raise SchemaError(f"table #{i} needs a 'name'")
        unknown = set(t) - {"name", "props", "rels", "label"}
        if unknown:
            raise SchemaError(f"table {t['name']!r}: unknown key(s) {sorted(unknown)}")
        try:
            props = tuple(Attribute(p["name"], p.get("kind", NUMERICAL)) for p in t.get("props", []))
            rels = tuple(Relation(r["name"], r["target"]) for r in t.get("rels", []))
            label = None
            if t.get("label") is not None:
                label = Label(t["label"]["name"], t["label"]["task"])
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"table {t['name']!r}: malformed attribute entry ({exc})") from None
        tables.append(TableDef(t["name"], props, rels, label))
    return Schema(tuple(tables), doc["root"])


def parse_schema(text: str) -> Schema:
    """Parse a JSON schema document.

    Raises :class:`SchemaError` on syntax errors (with line and column) and on
    any invariant violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return schema_from_dict(doc)


def read_schema(path: str | os.PathLike) -> Schema:
    with open(path, encoding="utf-8") as f:
        return parse_schema(f.read())


def write_schema(schema: Schema, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(schema.to_json())
        f.write("\n")


# ---------------------------------------------------------------------------
# Instances


@dataclass(frozen=True, eq=False)
class TableData:
    name: str
    ids: tuple[str, ...]
    props: dict[str, np.ndarray]
    rels: dict[str, tuple[tuple[str, ...], ...]]
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True, eq=False)
class DatasetInstance:
    """Rows of every table of ``schema``.

    Lookup structures (id index, compiled relations) are built lazily and
    cached; the instance itself is never mutated.
    """

    schema: Schema
    tables: dict[str, TableData]
    warnings: tuple[str, ...] = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def table(self, name: str) -> TableData:
        return self.tables[name]

    def n_rows(self, table: str) -> int:
        return len(self.tables[table].ids)

    def row_index(self, table: str) -> dict[str, int]:
        key = ("index", table)
        if key not in self._cache:
            idx: dict[str, int] = {}
            for i, rid in enumerate(self.tables[table].ids):
                idx.setdefault(rid, i)
            self._cache[key] = idx
        return self._cache[key]

    def relation_csr(self, table: str, relation: str) -> tuple[np.ndarray, np.ndarray]:
        """Compiled relation as CSR arrays ``(indptr, indices)``.

        ``indices[indptr[i]:indptr[i+1]]`` are the target-table positions of
        ``relation[row i]``, sorted ascending. Raises :class:`InstanceError`
        on a dangling reference.
        """
        key = ("csr", table, relation)
        if key not in self._cache:
            target = self.schema.table(table).relation(relation).target
            tindex = self.row_index(target)
            values = self.tables[table].rels[relation]
            indptr = np.zeros(len(values) + 1, dtype=np.int64)
            chunks = []
            for i, refs in enumerate(values):
                try:
                    pos = sorted({tindex[r] for r in refs})
                except KeyError as exc:
                    raise InstanceError(
                        f"{table}.{relation}[{self.tables[table].ids[i]}] references unknown row {exc.args[0]!r}"
                    ) from None
                chunks.append(pos)
                indptr[i + 1] = indptr[i] + len(pos)
            indices = np.fromiter((p for c in chunks for p in c), dtype=np.int64, count=int(indptr[-1]))
            self._cache[key] = (indptr, indices)
        return self._cache[key]

    def labels(self) -> np.ndarray:
        return self.tables[self.schema.root].labels  # type: ignore[return-value]


def relation_rows(instance: DatasetInstance, table: str, relation: str, row: str) -> list[str]:
    """``relation[row]`` as row ids in target-table order."""
    index = instance.row_index(table)
    if row not in index:
        raise KeyError(f"unknown row {row!r} in table {table!r}")
    indptr, indices = instance.relation_csr(table, relation)
    i = index[row]
    target = instance.schema.table(table).relation(relation).target
    tids = instance.tables[target].ids
    return [tids[j] for j in indices[indptr[i]:indptr[i + 1]]]


def parse_number(value: Any) -> float:
    """Locale-independent float parsing; unparseable values become NaN."""
    if value is None:
        return np.nan
    if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
        return float(value)
    s = str(value)
    if s.strip() == "":
        return np.nan
    if not _NUMBER_RE.match(s):
        raise ValueError(s)
    return float(s)


def _parse_refs(value: Any, where: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        if value.strip() == "":
            return ()
        tokens = value.split(";")
    else:
        tokens = list(value)
    out = []
    for tok in tokens:
        if not isinstance(tok, str) or tok.strip() == "" or tok != tok.strip():
            raise InstanceError(f"malformed row id list at {where}: {value!r}")
        out.append(tok)
    return tuple(out)


def load_instance(schema: Schema, table_sources: Mapping[str, Iterable[Mapping[str, Any]]]) -> DatasetInstance:
    """Build an instance from row records, one iterable of mappings per table.

    Cell values may be strings (as read from CSV) or already-typed Python
    values. Numerical cells that fail to parse are stored as missing and a
    warning is recorded; duplicated references inside one relation cell are
    collapsed (relations are sets), also with a warning.
    """
    missing_tables = [t.name for t in schema.tables if t.name not in table_sources]
    if missing_tables:
        raise InstanceError(f"no rows supplied for table(s) {missing_tables}")
    extra = set(table_sources) - {t.name for t in schema.tables}
    if extra:
        raise InstanceError(f"rows supplied for unknown table(s) {sorted(extra)}")

    warnings: list[str] = []
    tables: dict[str, TableData] = {}
    for tdef in schema.tables:
        known = {"id"} | {a.name for a in tdef.props} | {r.name for r in tdef.rels}
        if tdef.label is not None:
            known.add(tdef.label.name)
        ids: list[str] = []
        num_cols = {a.name: [] for a in tdef.props}
        rel_cols: dict[str, list[tuple[str, ...]]] = {r.name: [] for r in tdef.rels}
        labels: list[Any] = []
        for rec in table_sources[tdef.name]:
            unknown = set(rec) - known
            if unknown:
                raise InstanceError(f"table {tdef.name!r}: unknown column(s) {sorted(unknown)}")
            if "id" not in rec or rec["id"] in (None, ""):
                raise InstanceError(f"table {tdef.name!r}: row without id")
            rid = str(rec["id"])
            ids.append(rid)
            for a in tdef.props:
                if a.name not in rec:
                    raise InstanceError(f"table {tdef.name!r}: missing column {a.name!r}")
                v = rec[a.name]
                if a.kind == NUMERICAL:
                    try:
                        num_cols[a.name].append(parse_number(v))
                    except ValueError:
                        warnings.append(f"{tdef.name}.{a.name}[{rid}]: unparseable number {v!r} stored as missing")
                        num_cols[a.name].append(np.nan)
                else:
                    num_cols[a.name].append(None if v is None or v == "" else str(v))
            for r in tdef.rels:
                if r.name not in rec:
                    raise InstanceError(f"table {tdef.name!r}: missing column {r.name!r}")
                refs = _parse_refs(rec[r.name], f"{tdef.name}.{r.name}[{rid}]")
                uniq = tuple(dict.fromkeys(refs))
                if len(uniq) != len(refs):
                    warnings.append(f"{tdef.name}.{r.name}[{rid}]: duplicate references collapsed")
                rel_cols[r.name].append(uniq)
            if tdef.label is not None:
                if tdef.label.name not in rec:
                    raise InstanceError(f"root table {tdef.name!r}: label column {tdef.label.name!r} absent")
                labels.append(rec[tdef.label.name])

        props = {}
        for a in tdef.props:
            if a.kind == NUMERICAL:
                props[a.name] = np.asarray(num_cols[a.name], dtype=np.float64).reshape(-1)
            else:
                arr = np.empty(len(ids), dtype=object)
                arr[:] = num_cols[a.name]
                props[a.name] = arr
        label_arr = None
        if tdef.label is not None:
            label_arr = _parse_labels(labels, tdef.label.task, tdef.name, warnings)
        tables[tdef.name] = TableData(
            tdef.name, tuple(ids), props, {k: tuple(v) for k, v in rel_cols.items()}, label_arr
        )
    for w in warnings:
        logger.warning(w)
    return DatasetInstance(schema, tables, tuple(warnings))


def _parse_labels(values: Sequence[Any], task: str, table: str, warnings: list[str]) -> np.ndarray:
    if task == MULTICLASS:
        arr = np.empty(len(values), dtype=object)
        arr[:] = [None if v is None or v == "" else str(v) for v in values]
        return arr
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        try:
            out[i] = parse_number(v)
        except ValueError:
            warnings.append(f"{table}: unparseable label {v!r} stored as missing")
            out[i] = np.nan
    return out


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(f"{t}[{r}].{a}: {m}" for t, r, a, m in self.errors)


def validate_instance(schema: Schema, instance: DatasetInstance) -> ValidationReport:
    """Report dangling references, missing labels and duplicated row ids."""
    report = ValidationReport()
    for tdef in schema.tables:
        if tdef.name not in instance.tables:
            report.errors.append((tdef.name, "", "", "table missing from instance"))
    for tdef in schema.tables:
        data = instance.tables.get(tdef.name)
        if data is None:
            continue
        seen: set[str] = set()
        for rid in data.ids:
            if rid in seen:
                report.errors.append((tdef.name, rid, "id", "duplicated id"))
            seen.add(rid)
        for r in tdef.rels:
            target = instance.tables.get(r.target)
            tids = set(target.ids) if target is not None else set()
            for rid, refs in zip(data.ids, data.rels[r.name]):
                if len(set(refs)) != len(refs):
                    report.errors.append((tdef.name, rid, r.name, "duplicated reference"))
                for ref in refs:
                    if ref not in tids:
                        report.errors.append((tdef.name, rid, r.name, f"dangling reference {ref!r} into {r.target}"))
        if tdef.label is not None:
            for rid, y in zip(data.ids, data.labels):
                if y is None or (isinstance(y, float) and np.isnan(y)):
                    report.errors.append((tdef.name, rid, tdef.label.name, "missing label"))
    return report


# ---------------------------------------------------------------------------
# CSV files


def _format_number(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def read_instance_dir(schema: Schema, directory: str | os.PathLike) -> DatasetInstance:
    """Read ``<table>.csv`` for every table of ``schema``."""
    sources = {}
    for tdef in schema.tables:
        path = os.path.join(directory, f"{tdef.name}.csv")
        if not os.path.exists(path):
            raise InstanceError(f"missing file {path}")
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                raise InstanceError(f"{path}: empty file, header row required")
            if not header or header[0] != "id":
                raise InstanceError(f"{path}: first column must be 'id'")
            rows = []
            for lineno, cells in enumerate(reader, start=2):
                if len(cells) != len(header):
                    raise InstanceError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
                rows.append(dict(zip(header, cells)))
        sources[tdef.name] = rows
    return load_instance(schema, sources)


def write_instance_dir(instance: DatasetInstance, directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    for tdef in instance.schema.tables:
        data = instance.tables[tdef.name]
        header = ["id"] + [a.name for a in tdef.props] + [r.name for r in tdef.rels]
        if tdef.label is not None:
            header.append(tdef.label.name)
        with open(os.path.join(directory, f"{tdef.name}.csv"), "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            for i, rid in enumerate(data.ids):
                row = [rid]
                for a in tdef.props:
                    v = data.props[a.name][i]
                    row.append(_format_number(v) if a.kind == NUMERICAL else ("" if v is None else v))
                for r in tdef.rels:
                    row.append(";".join(data.rels[r.name][i]))
                if tdef.label is not None:
                    y = data.labels[i]
                    if tdef.label.task == MULTICLASS:
                        row.append("" if y is None else y)
                    elif tdef.label.task == BINARY and not np.isnan(y):
                        row.append(str(int(y)) if float(y).is_integer() else repr(float(y)))
                    else:
                        row.append(_format_number(y))
                w.writerow(row)
