"""File formats for panels, matrices and layouts.

Raw binary matrix layout (little-endian)::

    bytes 0..3   b"MSFA"
    bytes 4..7   u32 rows
    bytes 8..11  u32 cols
    then rows*cols float64, row-major

Layout JSON::

    {"num_nodes": N,
     "clusters": [{"name": str, "nodes": [int, ...]}, ...],
     "networks": [{"name": str, "clusters": [int, ...]}, ...]}
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .layout import NetworkLayout, TimeSeriesPanel

MAGIC = b"MSFA"
_HEADER = struct.Struct("<4sII")


def atomic_write_bytes(path, payload: bytes) -> Path:
    """Write ``payload`` to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- matrices -----------------------------------------------------------------


def matrix_to_bytes(A) -> bytes:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise ValidationError("only 2-D matrices can be serialized")
    rows, cols = A.shape
    return _HEADER.pack(MAGIC, rows, cols) + np.ascontiguousarray(A, dtype="<f8").tobytes()


def matrix_from_bytes(payload: bytes) -> np.ndarray:
    if len(payload) < _HEADER.size:
        raise ValidationError("binary matrix truncated before header end")
    magic, rows, cols = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise ValidationError(f"bad magic bytes {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(payload) != expected:
        raise ValidationError(f"binary matrix has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return data.reshape(rows, cols).astype(float)


def matrix_to_csv(A, header=None) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    buf = io.StringIO()
    if header is not None:
        buf.write(",".join(str(h) for h in header) + "\n")
    for row in A:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def write_matrix(path, A, header=None) -> Path:
    """Write by extension: ``.bin`` raw binary, anything else CSV."""
    path = Path(path)
    if path.suffix == ".bin":
        return atomic_write_bytes(path, matrix_to_bytes(A))
    return atomic_write_text(path, matrix_to_csv(A, header))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        payload = fh.read()
    if head == MAGIC:
        return matrix_from_bytes(payload)
    return _parse_csv(payload.decode("utf-8"), str(path))


def _parse_csv(text: str, source: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            if rows:
                raise ValidationError(f"{source}:{lineno}: non-numeric field") from None
            continue  # header line
    if not rows:
        raise ValidationError(f"{source}: no numeric rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{source}: ragged rows")
    return np.array(rows, dtype=float)


def read_panel(path) -> TimeSeriesPanel:
    """Read a ``T x N`` panel from CSV (header optional) or raw binary."""
    return TimeSeriesPanel(read_matrix(path))


def write_panel(path, panel) -> Path:
    data = panel.data if isinstance(panel, TimeSeriesPanel) else panel
    return write_matrix(path, data)


# -- layouts ------------------------------------------------------------------


def layout_to_dict(layout: NetworkLayout) -> dict:
    return {
        "num_nodes": layout.num_nodes,
        "clusters": [
            {"name": name, "nodes": list(nodes)}
            for name, nodes in zip(layout.cluster_names, layout.clusters)
        ],
        "networks": [
            {"name": name, "clusters": list(members)}
            for name, members in zip(layout.network_names, layout.networks)
        ],
    }


def layout_from_dict(doc: dict) -> NetworkLayout:
    try:
        clusters = doc["clusters"]
        networks = doc.get("networks") or []
        return NetworkLayout(
            num_nodes=doc["num_nodes"],
            clusters=tuple(tuple(c["nodes"]) for c in clusters),
            networks=tuple(tuple(s["clusters"]) for s in networks),
            cluster_names=tuple(c.get("name", f"C{r + 1}") for r, c in enumerate(clusters)),
            network_names=tuple(s.get("name", f"W{i + 1}") for i, s in enumerate(networks)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed layout document: {exc}") from exc


def read_layout(path) -> NetworkLayout:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return layout_from_dict(doc)


def write_layout(path, layout: NetworkLayout) -> Path:
    return write_json(path, layout_to_dict(layout))
