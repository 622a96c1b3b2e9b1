"""Atomic CSV/JSON writers with fixed float formatting."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from importlib import resources
from pathlib import Path

SCHEMA_NAME = "report.schema.json"


def fmt(x) -> str:
    """17 significant digits round-trip a double exactly."""
    if x is None:
        return ""
    if isinstance(x, (int, str)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".17g")


def atomic_write(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, doc: dict):
    atomic_write(path, dumps(doc))


def load_schema() -> dict:
    return json.loads(resources.files("whichpath_sim").joinpath(SCHEMA_NAME).read_text("utf-8"))


def validate(doc: dict):
    import jsonschema

    jsonschema.validate(doc, load_schema())
