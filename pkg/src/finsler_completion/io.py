"""Artifact writers: float64 grid dumps with JSON headers, CSV tables, JSON reports, manifests.

JSON floats are written with ``repr`` (shortest string that round-trips),
CSV floats with 17 significant digits. Nothing time-dependent is written, so
repeated runs give identical bytes.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

CSV_FORMAT = "%.17g"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class ArtifactWriter:
    """Writes files under ``root`` and remembers each one for the manifest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.entries = []

    def _record(self, path, stage):
        data = path.read_bytes()
        self.entries.append(
            {
                "path": path.relative_to(self.root).as_posix(),
                "stage": stage,
                "bytes": len(data),
                "sha256": hashlib.sha256(data).hexdigest(),
            }
        )
        return path

    def write_json(self, name, obj, stage):
        path = self.root / name
        path.write_text(dumps(obj))
        return self._record(path, stage)

    def write_grid(self, name, values, domain, stage, **header):
        """``name.f8`` holds C-order little-endian float64; ``name.json`` the header."""
        arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
        raw = self.root / f"{name}.f8"
        raw.write_bytes(arr.tobytes())
        self._record(raw, stage)
        meta = {
            "file": raw.name,
            "dtype": "<f8",
            "order": "C",
            "shape": list(arr.shape),
            "h": domain.h,
            "origin": list(domain.origin),
            **header,
        }
        return self.write_json(f"{name}.json", meta, stage)

    def write_csv(self, name, header, rows, stage):
        path = self.root / name
        rows = np.asarray(rows, dtype=float)
        with path.open("w") as fh:
            fh.write(",".join(header) + "\n")
            if rows.size:
                np.savetxt(fh, rows, fmt=CSV_FORMAT, delimiter=",")
        return self._record(path, stage)

    def write_manifest(self, scenario, status):
        path = self.root / "manifest.json"
        path.write_text(dumps({"scenario": scenario, "status": status, "artifacts": self.entries}))
        return path


def read_grid(header_path):
    """Load a grid dump written by :meth:`ArtifactWriter.write_grid`."""
    header_path = Path(header_path)
    meta = json.loads(header_path.read_text())
    data = np.fromfile(header_path.parent / meta["file"], dtype=meta["dtype"])
    return data.reshape(meta["shape"]), meta


def field_rows(domain, *arrays):
    """CSV rows ``(x^1..x^n, values...)`` over unmasked nodes in C order."""
    m = domain.mask
    cols = [domain.coordinates()[m]] + [np.asarray(a)[m][:, None] for a in arrays]
    return np.hstack(cols)


def verify_manifest(root):
    """Names of manifest entries whose checksum no longer matches (empty when all do)."""
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    bad = []
    for entry in manifest["artifacts"]:
        path = root / entry["path"]
        if not path.exists() or hashlib.sha256(path.read_bytes()).hexdigest() != entry["sha256"]:
            bad.append(entry["path"])
    return bad
