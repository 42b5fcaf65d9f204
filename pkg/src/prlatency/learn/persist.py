"""Single-file model bundles.

Layout: one header line ``PRLATENCY-MODEL <version>``, then one line of
canonical JSON (sorted keys, compact separators) holding ``metadata`` and
``model``. Arrays are stored as base64 of their little-endian bytes with
dtype and shape, so a load followed by a save reproduces the file exactly.
"""

from __future__ import annotations

import base64
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from sklearn.pipeline import Pipeline

from ..errors import ArchiveIOError, SchemaMismatchError
from ..ingest.archive import _umask
from ..preprocess import Log1pTransformer, MedianImputer, OrdinalOneHot, ZScoreScaler
from . import estimators
from .model import ResponseLatencyModel

MAGIC = "PRLATENCY-MODEL"
FORMAT_VERSION = 1

_REGISTRY = {
    cls.__name__: cls
    for cls in (
        ResponseLatencyModel,
        Log1pTransformer,
        MedianImputer,
        OrdinalOneHot,
        ZScoreScaler,
        estimators.GradientBoostedTrees,
        estimators.RandomForest,
        estimators.KNearestNeighbors,
        estimators.GaussianNaiveBayes,
        estimators.SoftmaxRegression,
        estimators.MultilayerPerceptron,
        estimators.LinearSVM,
    )
}


def _encode(obj):
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, float)):
        return obj
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        if obj.dtype == object:
            return {"__list_array__": [_encode(v) for v in obj.tolist()]}
        arr = np.ascontiguousarray(obj, dtype=obj.dtype.newbyteorder("<"))
        return {
            "__ndarray__": base64.b64encode(arr.tobytes()).decode("ascii"),
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
        }
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        if not all(isinstance(k, str) for k in obj):
            raise TypeError("only string-keyed dicts can be stored")
        return {"__dict__": {k: _encode(v) for k, v in obj.items()}}
    if isinstance(obj, Pipeline):
        return {"__pipeline__": [[name, _encode(step)] for name, step in obj.steps]}
    name = type(obj).__name__
    if _REGISTRY.get(name) is type(obj):
        state = {k: v for k, v in vars(obj).items() if k.endswith("_") and not k.startswith("_")}
        return {
            "__estimator__": name,
            "params": _encode(obj.get_params(deep=False)),
            "state": _encode(state),
        }
    raise TypeError(f"cannot store {type(obj).__name__}")


def _decode(obj):
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    if not isinstance(obj, dict):
        return obj
    if "__ndarray__" in obj:
        raw = base64.b64decode(obj["__ndarray__"])
        return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()
    if "__list_array__" in obj:
        return np.array([_decode(v) for v in obj["__list_array__"]], dtype=object)
    if "__dict__" in obj:
        return {k: _decode(v) for k, v in obj["__dict__"].items()}
    if "__pipeline__" in obj:
        return Pipeline([(name, _decode(step)) for name, step in obj["__pipeline__"]])
    if "__estimator__" in obj:
        cls = _REGISTRY.get(obj["__estimator__"])
        if cls is None:
            raise SchemaMismatchError(f"unknown component {obj['__estimator__']!r}")
        est = cls(**_decode(obj["params"]))
        for k, v in _decode(obj["state"]).items():
            setattr(est, k, v)
        return est
    raise SchemaMismatchError(f"unrecognized bundle node with keys {sorted(obj)}")


def dumps_model(model: ResponseLatencyModel) -> bytes:
    payload = {"metadata": _encode(model.metadata_), "model": _encode(model)}
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return f"{MAGIC} {FORMAT_VERSION}\n{body}\n".encode("utf-8")


def loads_model(data: bytes) -> ResponseLatencyModel:
    head, sep, body = data.partition(b"\n")
    parts = head.decode("utf-8", "replace").split(" ")
    if len(parts) != 2 or parts[0] != MAGIC:
        raise SchemaMismatchError("not a model bundle")
    if parts[1] != str(FORMAT_VERSION):
        raise SchemaMismatchError(f"bundle version {parts[1]} unsupported (expected {FORMAT_VERSION})")
    if not sep or not body.endswith(b"\n"):
        raise SchemaMismatchError("model bundle is truncated")
    try:
        payload = json.loads(body)
        model = _decode(payload["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaMismatchError(f"model bundle is corrupt or truncated: {exc}") from exc
    if not isinstance(model, ResponseLatencyModel):
        raise SchemaMismatchError("bundle does not hold a trained model")
    return model


def save_model(model: ResponseLatencyModel, path) -> None:
    path = Path(path)
    data = dumps_model(model)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except OSError as exc:
        raise ArchiveIOError(f"cannot write model {path}: {exc}") from exc


def load_model(path) -> ResponseLatencyModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ArchiveIOError(f"cannot read model {path}: {exc}") from exc
    return loads_model(data)
