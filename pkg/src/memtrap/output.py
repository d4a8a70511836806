"""Small file-output helpers: atomic writes and CSV formatting."""
from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value, digits: int = 6) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, int)) and not isinstance(value, float):
        return str(value)
    return f"{float(value):.{digits}g}"


def csv_text(header: Sequence[str], rows: Iterable[Sequence], digits: int = 6) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v, digits) for v in row))
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def grid_csv(x, y, values, names: Sequence[str], digits: int = 6) -> str:
    """Flatten a 2D field defined on 1D axes ``x`` (rows) and ``y`` (columns)."""
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    table = np.column_stack([X.ravel(), Y.ravel(), np.asarray(values, float).ravel()])
    buf = io.StringIO()
    np.savetxt(buf, table, fmt=f"%.{digits}g", delimiter=",", header=",".join(names), comments="")
    return buf.getvalue()


def content_hash(config: dict, files: Iterable = ()) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(config, sort_keys=True, default=str).encode())
    for f in files:
        h.update(Path(f).read_bytes())
    return h.hexdigest()
