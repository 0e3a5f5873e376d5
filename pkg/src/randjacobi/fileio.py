"""Model files, CSV emission and run manifests."""

from __future__ import annotations

import csv
import datetime
import json
import math
from pathlib import Path

import jsonschema

from . import __version__
from .model import GENERATOR_VERSION, ModelEnsemble, ModelError, PeriodicBlock, validate_ensemble

MODEL_SCHEMA = {
    "type": "object",
    "required": ["blocks", "p"],
    "additionalProperties": False,
    "properties": {
        "blocks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "t", "v"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "t": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                    "v": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                },
            },
        },
        "p": {"type": "array", "minItems": 1, "items": {"type": "number"}},
    },
}


class ModelFileError(ModelError):
    def __init__(self, message, line=None, column=None, path=None):
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.line, self.column, self.path = line, column, path


def _pointer(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out.lstrip(".") or "<root>"


def _locate(text: str, path) -> tuple[int | None, int | None]:
    """Best-effort line/column of the key or array holding the offending value."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None, None
    needle = f'"{keys[-1]}"'
    idx = -1
    # the n-th block's key: skip earlier occurrences of the same key
    nth = next((p for p in path if isinstance(p, int)), 0) if path and path[0] == "blocks" else 0
    start = 0
    for _ in range(nth + 1):
        idx = text.find(needle, start)
        if idx < 0:
            return None, None
        start = idx + 1
    line = text.count("\n", 0, idx) + 1
    return line, idx - (text.rfind("\n", 0, idx) + 1) + 1


def parse_model(text: str) -> ModelEnsemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from None
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        line, col = _locate(text, list(exc.absolute_path))
        raise ModelFileError(f"schema: {exc.message}", line, col, _pointer(exc.absolute_path)) from None
    blocks = tuple(PeriodicBlock(b["label"], tuple(b["t"]), tuple(b["v"])) for b in doc["blocks"])
    return validate_ensemble(ModelEnsemble(blocks, tuple(doc["p"])))


def load_model(path) -> ModelEnsemble:
    return parse_model(Path(path).read_text())


def dump_model(ensemble: ModelEnsemble) -> str:
    doc = {
        "blocks": [{"label": b.label, "t": list(b.hoppings), "v": list(b.potentials)} for b in ensemble.blocks],
        "p": list(ensemble.probabilities),
    }
    return json.dumps(doc, indent=2) + "\n"


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_manifest(outdir, command: str, config: dict) -> Path:
    return write_json(Path(outdir) / "manifest.json", {
        "command": command,
        "config": config,
        "version": __version__,
        "generator": GENERATOR_VERSION,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    })
