"""The shared on-disk model container.

Every model file is one JSON document tagged with FORMAT and a per-model
`type`. Floats go through json's shortest-repr encoding, which round-trips
float64 exactly.
"""

from __future__ import annotations

import json

import numpy as np

FORMAT = "futuresight-model-v1"


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed or fails validation."""


def write_document(path, type_tag: str, body: dict) -> None:
    doc = {"format": FORMAT, "type": type_tag, **body}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_document(path, expected_type: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"{path}: cannot read model file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: malformed model file at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: not a {FORMAT} document")
    if expected_type is not None and doc.get("type") != expected_type:
        raise ModelFormatError(f"{path}: expected model type {expected_type!r}, found {doc.get('type')!r}")
    return doc


def peek_type(path) -> str:
    return read_document(path)["type"]


def as_array(value, shape, what: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{what}: not a numeric array") from None
    if shape is not None and arr.shape != tuple(shape):
        raise ModelFormatError(f"{what}: shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{what}: non-finite values")
    return arr
