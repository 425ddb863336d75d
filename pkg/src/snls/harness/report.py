"""Evaluation reports: per-fold results, aggregates, configuration
provenance, and a content hash for reproducibility checks.

Reports contain no timestamps or timings so identical (config, data,
seed) runs serialize byte-identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..datapipe import SensorWindow

SCHEMA_VERSION = 1


def hash_windows(windows: list[SensorWindow]) -> str:
    """Content hash of a window list (samples, labels, users, order)."""
    h = hashlib.sha256()
    for w in windows:
        h.update(np.ascontiguousarray(w.samples, dtype="<f4").tobytes())
        h.update(w.label.encode("utf-8"))
        h.update(b"\x1f")
        h.update(w.user_id.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


@dataclass
class EvalReport:
    protocol: str
    config: dict
    data_hash: str
    seed: int
    folds: list[dict] = field(default_factory=list)
    mean_macro_f1: float | None = None
    std_macro_f1: float | None = None
    extras: dict = field(default_factory=dict)

    def finalize(self) -> "EvalReport":
        scores = [f["macro_f1"] for f in self.folds]
        if scores:
            self.mean_macro_f1 = float(sum(scores) / len(scores))
            self.std_macro_f1 = float(np.std(np.asarray(scores, dtype=np.float64)))
        return self

    def payload(self) -> dict:
        body = {
            "schema_version": SCHEMA_VERSION,
            "protocol": self.protocol,
            "config": self.config,
            "data_hash": self.data_hash,
            "seed": self.seed,
            "folds": self.folds,
            "mean_macro_f1": self.mean_macro_f1,
            "std_macro_f1": self.std_macro_f1,
            "extras": self.extras,
        }
        body["content_hash"] = hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()
        return body

    def to_json(self) -> str:
        return canonical_json(self.payload())

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def render_report_text(payload: dict) -> str:
    """Human-readable table mirroring the JSON to the digit."""
    lines = [f"protocol: {payload['protocol']}", f"data_hash: {payload['data_hash']}"]
    for fold in payload["folds"]:
        kind = "fold" if "fold" in fold else "group"
        lines.append(f"  {kind} {fold.get(kind, '?')}: macro_f1 = {fold['macro_f1']!r}")
    lines.append(f"mean_macro_f1 = {payload['mean_macro_f1']!r}")
    lines.append(f"std_macro_f1 = {payload['std_macro_f1']!r}")
    for key, value in sorted(payload.get("extras", {}).items()):
        if isinstance(value, (int, float, str)):
            lines.append(f"{key} = {value!r}")
    lines.append(f"content_hash: {payload['content_hash']}")
    return "\n".join(lines)
