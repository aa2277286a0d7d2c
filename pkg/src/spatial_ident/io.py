"""File formats: model specs, datasets and atomic output writes."""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError
from .graph import load_graph
from .mc import Dataset
from .models import ModelSpec, spec_from_dict


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON: {exc}") from None


def matrix_to_csv(M) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(np.asarray(M, dtype=float)), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def rows_to_csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_cell(v) for v in r))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_spec(path) -> ModelSpec:
    return spec_from_dict(read_json(path))


def save_spec(spec: ModelSpec, path) -> Path:
    return write_json(path, spec.to_dict())


def save_dataset(data: Dataset, outdir, graph_path=None) -> Path:
    """``Y.csv`` and ``Z.csv`` (one replicate per row) plus a ``dataset.json`` sidecar."""
    outdir = Path(outdir)
    atomic_write_text(outdir / "Y.csv", matrix_to_csv(data.Y))
    atomic_write_text(outdir / "Z.csv", matrix_to_csv(data.Z))
    if graph_path is None:
        atomic_write_text(outdir / "W.csv", matrix_to_csv(data.W.entries))
        graph_ref = "W.csv"
    else:
        graph_ref = os.path.relpath(Path(graph_path).resolve(), outdir.resolve())
    meta = {"seed": data.seed, "graph": graph_ref, "replicates": data.r, "locations": data.n,
            "Y": "Y.csv", "Z": "Z.csv"}
    return write_json(outdir / "dataset.json", meta)


def load_dataset(path, graph=None) -> Dataset:
    """Load from a dataset directory or its ``dataset.json``; ``graph`` overrides the sidecar."""
    path = Path(path)
    sidecar = path / "dataset.json" if path.is_dir() else path
    if not sidecar.exists():
        raise FileNotFoundError(f"{sidecar} not found")
    meta = read_json(sidecar)
    base = sidecar.parent
    W = load_graph(graph) if graph is not None else load_graph(base / meta["graph"])
    Y = np.loadtxt(base / meta.get("Y", "Y.csv"), delimiter=",", ndmin=2)
    Z = np.loadtxt(base / meta.get("Z", "Z.csv"), delimiter=",", ndmin=2)
    return Dataset(Y, Z, W, meta.get("seed"))
