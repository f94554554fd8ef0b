"""Artifact writers: matrices, JSON reports, CSV tables and the run manifest.

Matrices are stored as a JSON header next to a raw payload of
little-endian float64 values with real and imaginary parts interleaved,
row-major.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MATRIX_FORMAT = "complex128-le-interleaved"


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_matrix(stem, data: np.ndarray, meta: dict | None = None, dofs=None) -> list[Path]:
    """Write ``stem.bin`` (payload) and ``stem.json`` (header)."""
    stem = Path(stem)
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.complex128))
    payload = arr.view(np.float64).astype("<f8", copy=False).tobytes()
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(payload)
    header = {
        "format": MATRIX_FORMAT,
        "shape": list(arr.shape),
        "order": "C",
        "payload": bin_path.name,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    if dofs is not None:
        header["dofs"] = np.asarray(dofs).tolist()
    return [write_json(stem.with_suffix(".json"), header), bin_path]


def read_matrix(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    raw = np.frombuffer((stem.parent / header["payload"]).read_bytes(), dtype="<f8")
    return raw.view(np.complex128).reshape(header["shape"]).copy(), header


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "fracmag": __version__}


@dataclass
class RunManifest:
    """Record of one CLI invocation and every file it wrote."""

    command: str
    config_path: str
    config_hash: str
    out_dir: Path
    seed: int | None = None
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def add(self, *paths) -> None:
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.add(*p)
            else:
                self.files.append(Path(p))

    def check(self, name: str, ok: bool, /, **details) -> bool:
        details.pop("passed", None)
        self.checks[name] = {**details, "passed": bool(ok)}
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def write(self) -> Path:
        entries = []
        for p in self.files:
            entries.append({"path": str(Path(p).relative_to(self.out_dir)) if Path(p).is_relative_to(self.out_dir)
                            else str(p), "sha256": file_digest(p), "bytes": Path(p).stat().st_size})
        doc = {
            "command": self.command,
            "config": {"path": self.config_path, "sha256": self.config_hash},
            "seed": self.seed,
            "outputs": entries,
            "versions": versions(),
            "wall_time_s": time.perf_counter() - self.started,
            "checks": self.checks,
            "passed": self.passed,
        }
        return write_json(self.out_dir / f"manifest_{self.command}.json", doc)
