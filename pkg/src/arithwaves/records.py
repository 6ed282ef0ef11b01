"""Line-delimited JSON records with embedded run manifests.

Each line of a record file is one self-describing object::

    {"schema": 1, "kind": ..., "manifest": {...}, "data": {...}, "timing": {...}}

``data`` holds everything numeric and is a pure function of the manifest
parameters.  Wall-clock quantities live in ``timing`` and the manifest
timestamp, so reproducibility is checked on :func:`numeric_bytes`.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Iterator

from .sampler import ExperimentRecord

__all__ = [
    "SCHEMA_VERSION",
    "RunManifest",
    "ExperimentRecord",
    "artifact_version",
    "dumps_line",
    "loads_line",
    "append_line",
    "read_lines",
    "numeric_bytes",
    "record_to_data",
    "record_from_data",
    "csv_manifest_line",
    "parse_csv_manifest",
]

SCHEMA_VERSION = 1
_CSV_PREFIX = "# manifest: "


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    version: str = field(default_factory=artifact_version)
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    )
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["inputs"] = list(self.inputs)
        d["outputs"] = list(self.outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["command"], dict(d["params"]), d["version"], d["timestamp"],
                   tuple(d.get("inputs", ())), tuple(d.get("outputs", ())))


def _encode(x: Any) -> Any:
    # JSON has no inf/nan; encode them as strings so the round trip is exact
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _encode(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_encode(v) for v in x]
    return x


def _decode_float(x: Any) -> Any:
    if x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def record_to_data(rec: ExperimentRecord) -> dict:
    """Numeric payload of an experiment record (everything except wall_time)."""
    d = dataclasses.asdict(rec)
    d.pop("wall_time")
    d["aborted"] = list(rec.aborted)
    return d


def record_from_data(data: dict, wall_time: float = 0.0) -> ExperimentRecord:
    kw = {k: _decode_float(v) for k, v in data.items()}
    kw["aborted"] = tuple(kw.get("aborted", ()))
    return ExperimentRecord(**kw, wall_time=wall_time)


def dumps_line(kind: str, manifest: RunManifest, data: dict, timing: dict | None = None) -> str:
    obj = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "manifest": manifest.to_dict(),
        "data": data,
        "timing": timing or {},
    }
    return json.dumps(_encode(obj), sort_keys=True, allow_nan=False)


def loads_line(line: str) -> dict:
    obj = json.loads(line)
    if obj.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema {obj.get('schema')!r}")
    obj["manifest"] = RunManifest.from_dict(obj["manifest"])
    obj["data"] = {k: _decode_float(v) for k, v in obj["data"].items()}
    return obj


def append_line(path: Path | str, line: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def read_lines(path: Path | str) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip():
                yield loads_line(raw)


def numeric_bytes(obj: dict) -> bytes:
    """Canonical bytes of a parsed line's kind and data, the reproducible part."""
    payload = {"kind": obj["kind"], "data": obj["data"]}
    return json.dumps(_encode(payload), sort_keys=True, allow_nan=False).encode()


def csv_manifest_line(manifest: RunManifest) -> str:
    return _CSV_PREFIX + json.dumps(manifest.to_dict(), sort_keys=True)


def parse_csv_manifest(line: str) -> RunManifest | None:
    if not line.startswith(_CSV_PREFIX):
        return None
    return RunManifest.from_dict(json.loads(line[len(_CSV_PREFIX):]))
