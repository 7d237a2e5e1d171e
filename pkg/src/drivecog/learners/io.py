"""Self-describing binary model files.

Layout (little-endian)::

    magic   8 bytes  b"DCOGMDL1"
    hlen    uint32   length of the JSON header
    header  JSON: {"type", "meta", "blocks": [{"name", "shape"}, ...]}
    blocks  float32 arrays in header order, C order

Parameters round-trip at float32 precision.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .elm import ElmModel
from .lstm import LstmModel
from .pca import PcaModel

MAGIC = b"DCOGMDL1"


def write_model_file(path, model_type, blocks, meta):
    header = {"type": model_type, "meta": meta,
              "blocks": [{"name": k, "shape": list(np.shape(v))} for k, v in blocks.items()]}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in blocks.values())
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(hb)) + hb + body)


def read_model_file(path):
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    (hlen,) = struct.unpack_from("<I", buf, 8)
    header = json.loads(buf[12:12 + hlen].decode("utf-8"))
    off, blocks = 12 + hlen, {}
    for b in header["blocks"]:
        n = int(np.prod(b["shape"], dtype=int))
        blocks[b["name"]] = np.frombuffer(buf, "<f4", n, off).reshape(b["shape"]).astype(float)
        off += 4 * n
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    return header["type"], blocks, header["meta"]


def save_model(model, path, **meta):
    """Write a PcaModel, ElmModel or LstmModel; extra keyword args go into the header."""
    if isinstance(model, PcaModel):
        blocks = {"mean": model.mean, "components": model.components,
                  "explained_variance": model.explained_variance}
        meta.update(total_variance=model.total_variance, fitted_on=model.fitted_on)
        kind = "pca"
    elif isinstance(model, ElmModel):
        blocks = {"input_weights": model.input_weights, "biases": model.biases,
                  "output_weights": model.output_weights}
        meta.update(seed=model.seed, ridge=model.ridge, activation="tribas")
        kind = "elm"
    elif isinstance(model, LstmModel):
        blocks = {k: model.params[k] for k in model.param_names()}
        meta.update(seed=model.seed, input_dim=model.input_dim, hidden=list(model.hidden),
                    n_classes=model.n_classes)
        kind = "lstm"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    write_model_file(path, kind, blocks, meta)


def load_model(path):
    kind, b, meta = read_model_file(path)
    if kind == "pca":
        model = PcaModel(b["mean"], b["components"], b["explained_variance"],
                         meta["total_variance"], meta["fitted_on"])
    elif kind == "elm":
        model = ElmModel(b["input_weights"], b["biases"], b["output_weights"],
                         meta["seed"], meta["ridge"])
    elif kind == "lstm":
        model = LstmModel(meta["input_dim"], tuple(meta["hidden"]), b, meta["seed"],
                          meta["n_classes"])
    else:
        raise ValueError(f"{path}: unknown model type {kind!r}")
    return model, meta
