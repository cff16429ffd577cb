"""JSON model files: architecture header plus base64 little-endian float64 blocks."""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np

from .model import DeepSetModel

FORMAT = "objvote-deepset"
VERSION = 1


class ModelFileError(ValueError):
    pass


def save_model(model: DeepSetModel, path, meta: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "hidden_width": model.hidden_width,
        "encoder_layers": model.encoder_layers,
        "decoder_layers": model.decoder_layers,
        "pool": model.pool,
        "voter_agg": model.voter_agg,
        "meta": meta or {},
        "params": [
            {
                "shape": list(p.shape),
                "data": base64.b64encode(np.ascontiguousarray(p, dtype="<f8").tobytes()).decode("ascii"),
            }
            for p in model.params
        ],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    os.replace(tmp, path)


def load_model(path) -> DeepSetModel:
    model, _ = load_model_with_meta(path)
    return model


def load_model_with_meta(path) -> tuple[DeepSetModel, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: unreadable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFileError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ModelFileError(f"{path}: unsupported version {doc.get('version')!r}, expected {VERSION}")
    try:
        arch = {k: doc[k] for k in ("hidden_width", "encoder_layers", "decoder_layers", "pool", "voter_agg")}
        skeleton = DeepSetModel(**arch)
        blocks = doc["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: bad header ({exc})") from exc

    expected = skeleton.param_shapes()
    if len(blocks) != len(expected):
        raise ModelFileError(f"{path}: {len(blocks)} parameter blocks, architecture needs {len(expected)}")
    params = []
    for k, (block, shape) in enumerate(zip(blocks, expected)):
        if tuple(block.get("shape", ())) != shape:
            raise ModelFileError(f"{path}: block {k} has shape {block.get('shape')}, expected {list(shape)}")
        try:
            raw = base64.b64decode(block["data"], validate=True)
        except (KeyError, ValueError) as exc:
            raise ModelFileError(f"{path}: block {k} is not valid base64") from exc
        if len(raw) != 8 * int(np.prod(shape)):
            raise ModelFileError(f"{path}: block {k} holds {len(raw)} bytes, expected {8 * int(np.prod(shape))}")
        params.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
    skeleton.params = params
    return skeleton, doc.get("meta", {})
