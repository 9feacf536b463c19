"""Model persistence.

A model file is UTF-8 JSON with sorted keys::

    {"format": "flightbp-model", "format_version": 1,
     "class_names": [...],
     "schema": {"numeric": [{"name", "mean", "std"}...],
                "categorical": [{"name", "vocabulary"}...], "class_names": [...]},
     "network": {"input_dim": n, "layers": [{"activation", "weights", "biases"}...]},
     "provenance": {"config_hash", "seed", "epochs_run", "final_train_mse", "final_val_mse"}}

Floats are written with ``repr`` (shortest round-tripping decimal), so
loading reproduces every weight bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from flightbp.data_pipeline import FeatureSchema
from flightbp.errors import FlightBPError
from flightbp.nn_core import LayerParams, NetworkParams

FORMAT = "flightbp-model"
FORMAT_VERSION = 1


class ModelFormatError(FlightBPError, ValueError):
    exit_code = 14


@dataclass(frozen=True, eq=False)
class ModelFile:
    schema: FeatureSchema
    network: NetworkParams
    class_names: tuple[str, ...]
    provenance: dict = field(default_factory=dict)


def network_to_dict(net: NetworkParams) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "activation": layer.activation.value,
                "weights": [[float(v) for v in row] for row in layer.weights],
                "biases": [float(v) for v in layer.biases],
            }
            for layer in net.layers
        ],
    }


def network_from_dict(data) -> NetworkParams:
    layers = []
    for d in data["layers"]:
        w = np.array(d["weights"], dtype=np.float64)
        layers.append(LayerParams(w, np.array(d["biases"], dtype=np.float64), d["activation"]))
    return NetworkParams(tuple(layers), int(data["input_dim"]))


def dumps(model: ModelFile) -> str:
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "class_names": list(model.class_names),
        "schema": model.schema.to_dict(),
        "network": network_to_dict(model.network),
        "provenance": model.provenance,
    }
    for value in _floats(doc):
        if not np.isfinite(value):
            raise ModelFormatError("refusing to write a non-finite value into a model file")
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _floats(obj):
    if isinstance(obj, float):
        yield obj
    elif isinstance(obj, dict):
        for v in obj.values():
            yield from _floats(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _floats(v)


def loads(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a flightbp model file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r} (expected {FORMAT_VERSION})")
    try:
        schema = FeatureSchema.from_dict(doc["schema"])
        net = network_from_dict(doc["network"])
        class_names = tuple(doc["class_names"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if net.input_dim != schema.encoded_width:
        raise ModelFormatError(
            f"network input width {net.input_dim} does not match schema width {schema.encoded_width}"
        )
    return ModelFile(schema, net, class_names, doc.get("provenance", {}))


def save(model: ModelFile, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load(path) -> ModelFile:
    return loads(Path(path).read_text(encoding="utf-8"))


def provenance(config_hash: str, seed: int, epochs_run: int, final_train_mse: Optional[float],
               final_val_mse: Optional[float]) -> dict:
    return {
        "config_hash": config_hash,
        "seed": seed,
        "epochs_run": epochs_run,
        "final_train_mse": final_train_mse,
        "final_val_mse": final_val_mse,
    }
