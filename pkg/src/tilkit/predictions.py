"""Prediction file I/O: JSON array of per-image detection lists."""

from __future__ import annotations

import json
import os
from pathlib import Path

from tilkit.errors import InputError, SchemaError
from tilkit.types import Detection


def read_predictions(path: str | os.PathLike) -> list[tuple[str | int, list[Detection]]]:
    """Load `[{image_id, detections: [{cx, cy, w, h, confidence}]}]`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read predictions {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise SchemaError("predictions file must be a JSON array")
    out = []
    for i, entry in enumerate(doc):
        if "image_id" not in entry:
            raise SchemaError(f"predictions[{i}] missing image_id")
        dets = []
        for j, d in enumerate(entry.get("detections", [])):
            try:
                dets.append(
                    Detection(
                        cx=float(d["cx"]),
                        cy=float(d["cy"]),
                        width=float(d["w"]),
                        height=float(d["h"]),
                        confidence=float(d["confidence"]),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"predictions[{i}].detections[{j}] missing {exc}") from exc
        out.append((entry["image_id"], dets))
    return out


def write_predictions(
    entries: list[tuple[str | int, list[Detection]]], path: str | os.PathLike
) -> None:
    doc = [
        {
            "image_id": image_id,
            "detections": [
                {"cx": d.cx, "cy": d.cy, "w": d.width, "h": d.height, "confidence": d.confidence}
                for d in dets
            ],
        }
        for image_id, dets in entries
    ]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
