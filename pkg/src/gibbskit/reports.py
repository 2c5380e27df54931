"""Result records, atomic JSON/CSV output and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

PROVENANCES = ("oracle", "cluster", "oned", "check", "locality", "stats")


@dataclass
class ResultRecord:
    quantity: str
    value: object
    bound: object = None
    passed: bool | None = None
    units: str = ""
    provenance: str = "oracle"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.bound is not None and self.passed is None:
            raise ValueError(f"record {self.quantity!r} carries a bound but no pass flag")

    def to_json(self) -> dict:
        out = asdict(self)
        if not self.extras:
            out.pop("extras")
        return out


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats with strings so the output stays valid JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_jsonable(obj):
    return _clean(json.loads(json.dumps(obj, default=_default, allow_nan=True)))


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps(obj))


def format_number(x) -> str:
    """Deterministic 17-significant-digit rendering (round-trips doubles)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.17g}"


def emit_plot_data(columns: list[str], rows, path, comment: str | None = None) -> Path:
    """CSV with a header row; `rows` holds dicts keyed by column or sequences in column order."""
    lines = [",".join(columns)]
    for row in rows:
        vals = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
        if len(vals) != len(columns):
            raise ValueError(f"row has {len(vals)} values for {len(columns)} columns")
        lines.append(",".join(format_number(v) for v in vals))
    if comment:
        lines.extend(f"# {line}" for line in comment.splitlines())
    return atomic_write_text(path, "\n".join(lines) + "\n")


def config_digest(config_bytes: bytes) -> str:
    return hashlib.sha256(config_bytes).hexdigest()


def canonical_bytes(obj) -> bytes:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":")).encode()


def code_version() -> str:
    from . import __version__
    return __version__


def host_summary() -> dict:
    return {"python": platform.python_version(), "machine": platform.machine(),
            "system": platform.system(), "cpus": os.cpu_count(), "numpy": np.__version__}


@dataclass
class RunManifest:
    command: str
    config_digest: str
    code_version: str
    wall_time_s: float
    host: dict
    outputs: list

    def to_json(self) -> dict:
        return asdict(self)


def write_manifest(out_dir, command: str, config_bytes: bytes, wall_time_s: float, outputs) -> Path:
    man = RunManifest(command, config_digest(config_bytes), code_version(), wall_time_s,
                      host_summary(), sorted(str(Path(p).name) for p in outputs))
    return write_json(Path(out_dir) / "manifest.json", man)
