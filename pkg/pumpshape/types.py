# SPDX-FileCopyrightText: © Atakama, Inc <support@atakama.com>
# SPDX-License-Identifier: LGPL-3.0-or-later

"""Pumpshape: column types shared by the result store and the CSV writer"""
import math
import numbers

import numpy as np
from notanorm import DbType


def ddl_type(typ: DbType) -> str:
    """DDL spelling of a column type."""
    if typ == DbType.BOOLEAN:
        return "boolean"
    if typ == DbType.INTEGER:
        return "integer"
    if typ == DbType.DOUBLE:
        return "double"
    if typ == DbType.TEXT:
        return "text"
    # should never happen
    raise AssertionError("unknown type: %s" % typ)


def format_value(value) -> str:
    """CSV cell text; floats use repr so reruns are byte-identical."""
    if value is None:
        return "nan"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    return str(value)
