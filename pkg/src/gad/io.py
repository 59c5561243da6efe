"""CSV/JSON writers shared by the export functions.

Floats are written with 17 significant digits so every double round-trips.
Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import json
import numbers
import os
import tempfile
from pathlib import Path


def fmt(value) -> str:
    if isinstance(value, (str, bool, numbers.Integral)):
        return str(value)
    if isinstance(value, numbers.Real):
        return format(float(value), ".17g")
    return str(value)


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])

    _atomic_write(path, write)


def write_json(path, payload) -> None:
    def write(fh):
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _atomic_write(path, write)


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]
