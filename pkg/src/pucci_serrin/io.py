"""CSV tables, ``key = value`` reports and config files."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ArgumentError, PucciSerrinError

#: Every number written to CSV or a report carries this many significant digits.
SIG_DIGITS = 9


class FormatError(PucciSerrinError, OSError):
    """Malformed input file (mapped to the I/O exit code)."""


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:#.{SIG_DIGITS}g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "(" + ", ".join(fmt(v) for v in value) + ")"
    return str(value)


def write_csv(path, header, rows, preamble=()):
    """Write a table with one header row; ``preamble`` lines go first (e.g. ``WARN ...``)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in preamble:
            fh.write(f"{line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path, header):
    """Read a numeric table and check its header; returns a float array ``(rows, cols)``.

    Lines starting with ``WARN`` before the header are skipped.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        lineno = 0
        got = None
        for got in reader:
            lineno += 1
            if got and got[0].startswith("WARN"):
                continue
            break
        if got is None:
            raise FormatError(f"{path}: empty file")
        names = [g.strip() for g in got]
        if names != list(header):
            raise FormatError(f"{path}: row {lineno}: expected header {','.join(header)}, "
                              f"got {','.join(names)}")
        data = []
        for row in reader:
            lineno += 1
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {lineno}: expected {len(header)} columns, "
                                  f"got {len(row)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"{path}: row {lineno}, column {col}: not a number: {cell!r}"
                    ) from None
            data.append(vals)
    return np.array(data, dtype=float).reshape(-1, len(header))


def write_report(path, items):
    """``key = value`` lines; ``items`` is a mapping or a list of pairs."""
    text = format_report(items)
    if path is None:
        return text
    Path(path).write_text(text)
    return text


def format_report(items) -> str:
    pairs = items.items() if hasattr(items, "items") else items
    return "".join(f"{k} = {fmt(v)}\n" for k, v in pairs)


def parse_key_values(text, source="<config>") -> dict:
    """Parse ``key = value`` lines with ``#`` comments into a flat string map."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{source}: line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ArgumentError(f"{source}: line {lineno}: empty key")
        if key in out:
            raise ArgumentError(f"{source}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    return parse_key_values(text, str(path))
