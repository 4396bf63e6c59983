"""Atomic file output: CSV tables and flat key-value metadata."""

from __future__ import annotations

import csv
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path


class OutputError(OSError):
    pass


def ensure_writable_dir(path: str | Path) -> Path:
    """Create ``path`` if needed and check a file can be placed in it."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=path, prefix=".probe-")
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        raise OutputError(f"output directory {str(path)!r} is not writable: {exc.strerror or exc}") from exc
    return path


@contextmanager
def atomic_open(path: str | Path, mode: str = "w", **kwargs):
    """Write to a temporary sibling, then rename over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_csv(path: str | Path, header, rows) -> Path:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


def _flat(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value).replace("\n", " ")


def write_metadata(path: str | Path, items: dict) -> Path:
    """``key = value`` lines in insertion order."""
    with atomic_open(path, "w", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_flat(v)}\n")
    return Path(path)


def read_metadata(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
