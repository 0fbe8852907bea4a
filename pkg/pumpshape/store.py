# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: keyed result store for scenario tables"""
import logging as log
import re
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

from notanorm import DbBase, DbModel, DbType, SqliteDb, model_from_ddl

from .types import ddl_type

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_RESERVED = {"index", "time", "order", "group", "key", "table", "values", "select"}
_KEY_COLUMNS = ("task_id", "row_id")


@dataclass(frozen=True)
class Column:
    name: str
    type: DbType = DbType.DOUBLE
    unit: str = ""


@dataclass(frozen=True)
class TableSpec:
    """One output table: column order is CSV order."""

    name: str
    columns: Sequence[Column]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        for name in [self.name] + [c.name for c in self.columns]:
            if not _IDENT.match(name) or name.lower() in _RESERVED or name in _KEY_COLUMNS:
                raise ValueError("bad table or column name %r" % name)
        if len({c.name for c in self.columns}) != len(self.columns):
            raise ValueError("duplicate column in table %r" % self.name)

    @property
    def column_names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def units(self) -> Dict[str, str]:
        return {c.name: c.unit for c in self.columns}


def _to_db(value, typ: DbType):
    if value is None:
        return None
    if typ == DbType.INTEGER:
        return int(value)
    if typ in (DbType.DOUBLE, DbType.FLOAT):
        return float(value)
    return str(value)


class ResultStore:
    """Rows from every task of a scenario, keyed by (task_id, row_id).

    Tasks may finish in any order; select() always returns rows in key order.
    """

    version = 1

    def __init__(self, tables: Iterable[TableSpec], db: Optional[DbBase] = None):
        self.tables: Dict[str, TableSpec] = {t.name: t for t in tables}
        self.model: DbModel = model_from_ddl(self.schema(self.version), "sqlite")
        self.db = db or SqliteDb(":memory:")
        self._create_if_needed()

    def schema(self, version) -> str:
        """Semicolon-delimited DDL for every table."""
        assert version == self.version
        ddl = []
        for tab in self.tables.values():
            cols = ["task_id integer", "row_id integer"]
            cols += ["%s %s" % (c.name, ddl_type(c.type)) for c in tab.columns]
            ddl.append("create table %s (%s, primary key (task_id, row_id))" % (tab.name, ", ".join(cols)))
        return ";\n".join(ddl) + ";"

    def _create_if_needed(self):
        have = self.db.model()
        missing = DbModel({k: v for k, v in self.model.items() if k not in have})
        if missing:
            log.debug("creating result tables: %s", ", ".join(missing))
            self.db.create_model(missing)

    def insert(self, table: str, task_id: int, rows: Sequence[Dict[str, Any]]):
        """Insert the rows one task produced for table."""
        tab = self.tables.get(table)
        if tab is None:
            raise KeyError("unknown result table %r" % table)
        for row_id, row in enumerate(rows):
            extra = set(row) - set(tab.column_names)
            if extra:
                raise KeyError("table %r has no column %s" % (table, ", ".join(sorted(extra))))
            vals = {c.name: _to_db(row.get(c.name), c.type) for c in tab.columns}
            self.db.insert(table, task_id=task_id, row_id=row_id, **vals)

    def select(self, table: str) -> List[Dict[str, Any]]:
        """Rows of table in (task_id, row_id) order, columns in declared order."""
        tab = self.tables[table]
        out = []
        for row in self.db.select_gen(table, None, {}, order_by=list(_KEY_COLUMNS)):
            out.append({name: row[name] for name in tab.column_names})
        return out

    def count(self, table: str) -> int:
        return self.db.count(table, {})

    def close(self):
        self.db.close()
