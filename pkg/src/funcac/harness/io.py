"""Config loading and CSV persistence of run logs."""

from __future__ import annotations

import json
import os

from ..driver import LOG_COLUMNS, LogRecord, RunConfig, RunLog
from ..errors import IoError, ParseError, SchemaMismatch

HEADER = ",".join(LOG_COLUMNS)
DIVERGED_TAG = "#diverged"


def load_config(path) -> RunConfig:
    """Parse a strict JSON run config; unknown or missing keys raise ParseError."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg} at line {exc.lineno}", line=exc.lineno) from None
    return RunConfig.from_dict(doc)


def save_config(config: RunConfig, path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(config.to_dict(), f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write config {path}: {exc.strerror}") from exc


def _fmt(value) -> str:
    return str(value) if isinstance(value, int) else repr(float(value))


def format_log(log: RunLog) -> str:
    lines = [HEADER]
    lines.extend(",".join(_fmt(v) for v in rec) for rec in log.records)
    if log.diverged_at is not None:
        lines.append(f"{DIVERGED_TAG},{log.diverged_at}")
    return "\n".join(lines) + "\n"


def write_log(log: RunLog, path) -> None:
    """Write the CSV atomically (temp file then rename)."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="") as f:
            f.write(format_log(log))
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write log {path}: {exc.strerror}") from exc


def read_log(path) -> RunLog:
    try:
        with open(path, newline="") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read log {path}: {exc.strerror}") from exc
    if not lines or lines[0] != HEADER:
        raise SchemaMismatch(f"{path}: header does not match {HEADER!r}")
    log = RunLog()
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if cells[0] == DIVERGED_TAG:
            log.diverged_at = int(cells[1])
            continue
        if len(cells) != len(LOG_COLUMNS):
            raise SchemaMismatch(f"{path}:{lineno}: expected {len(LOG_COLUMNS)} fields, got {len(cells)}")
        try:
            log.records.append(LogRecord(int(cells[0]), *map(float, cells[1:])))
        except ValueError as exc:
            raise SchemaMismatch(f"{path}:{lineno}: {exc}") from None
    return log
