"""Artifact file formats.

* ``psd.csv``: header ``omega,s_est,s_analytic,n_segments``; omega in
  rad/period, densities in J^2*period.
* ``summary.json`` / ``ledger.json``: sorted-key JSON documents.
* ``events.csv``: header ``k,mark``.
* ``table`` files (sweep aggregates): plain CSV with a header row.

Floats are written in shortest round-trip form (``repr``) with a ``.``
decimal separator regardless of locale, so every file parses back to the
exact values that were written.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PSD_HEADER = ("omega", "s_est", "s_analytic", "n_segments")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class ArtifactFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PsdTable:
    omega: np.ndarray
    s_est: np.ndarray
    s_analytic: np.ndarray
    n_segments: int


def write_psd(path, omega, s_est, s_analytic, n_segments: int) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(",".join(PSD_HEADER) + "\n")
    for o, s, a in zip(omega, s_est, s_analytic):
        buf.write(f"{fmt(float(o))},{fmt(float(s))},{fmt(float(a))},{int(n_segments)}\n")
    path.write_text(buf.getvalue(), encoding="ascii")
    return path


def read_psd(path) -> PsdTable:
    path = Path(path)
    try:
        with path.open(newline="", encoding="ascii") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ArtifactFormatError(f"{path}: not an ASCII psd file") from exc
    if not rows or tuple(rows[0]) != PSD_HEADER:
        raise ArtifactFormatError(f"{path}: expected header {','.join(PSD_HEADER)}")
    body = rows[1:]
    if not body:
        raise ArtifactFormatError(f"{path}: no data rows")
    try:
        cols = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in body])
        segs = {int(r[3]) for r in body}
    except (ValueError, IndexError) as exc:
        raise ArtifactFormatError(f"{path}: malformed row ({exc})") from exc
    if len(segs) != 1:
        raise ArtifactFormatError(f"{path}: inconsistent n_segments column")
    return PsdTable(cols[:, 0], cols[:, 1], cols[:, 2], segs.pop())


def write_events(path, event_k, event_marks) -> Path:
    path = Path(path)
    with path.open("w", encoding="ascii") as fh:
        fh.write("k,mark\n")
        for k, m in zip(event_k, event_marks):
            fh.write(f"{int(k)},{fmt(float(m))}\n")
    return path


def read_events(path):
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["k", "mark"]:
        raise ArtifactFormatError(f"{path}: expected header k,mark")
    k = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    m = np.array([float(r[1]) for r in rows[1:]])
    return k, m


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(dumps_json(doc), encoding="ascii")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="ascii"))


def write_table(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(c for c in r if c not in columns)
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
    return path


def read_table(path) -> list[dict]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
