"""On-disk artifact formats.

Every artifact starts with a single JSON header line (UTF-8, sorted keys)
followed by a raw binary body, so files stay parseable from any language:

* dataset  - header then n_samples * n_qubits outcome symbols, one byte
  each, rows concatenated.
* checkpoint - header listing named parameter arrays with shapes, then
  the arrays concatenated as little-endian float64, C order.

Headers embed the hash of the generating config; metrics CSVs carry the
same hash in every row so artifacts link back to their configs.
"""

import hashlib
import json

import numpy as np

from .errors import FormatError

DATASET_MAGIC = "povmtomo-dataset"
CHECKPOINT_MAGIC = "povmtomo-checkpoint"
FORMAT_VERSION = 1

METRICS_COLUMNS = ("metric", "value", "stderr", "n_samples", "config_hash")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def _write_header(f, header: dict):
    f.write(canonical_json(header).encode("utf-8"))
    f.write(b"\n")


def _read_header(f, magic: str) -> dict:
    line = f.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    if header.get("format") != magic:
        raise FormatError(f"expected {magic}, found {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {header.get('version')!r}")
    return header


# -- datasets ------------------------------------------------------------------


def write_dataset(path, outcomes: np.ndarray, *, povm_id: str, m: int, state: dict,
                  seed: int, generator: str, cfg_hash: str, extra: dict | None = None):
    outcomes = np.ascontiguousarray(outcomes, dtype=np.uint8)
    if outcomes.ndim != 2:
        raise ValueError("outcomes must be (n_samples, n_qubits)")
    if outcomes.size and outcomes.max() >= m:
        raise ValueError("outcome symbol out of range for m")
    header = {
        "format": DATASET_MAGIC,
        "version": FORMAT_VERSION,
        "n_qubits": int(outcomes.shape[1]),
        "m": int(m),
        "n_samples": int(outcomes.shape[0]),
        "povm": povm_id,
        "state": state,
        "seed": int(seed),
        "generator": generator,
        "config_hash": cfg_hash,
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        _write_header(f, header)
        f.write(outcomes.tobytes(order="C"))


def read_dataset(path):
    """(header, outcomes) with full validation of the body."""
    with open(path, "rb") as f:
        header = _read_header(f, DATASET_MAGIC)
        body = f.read()
    n, N, m = header["n_samples"], header["n_qubits"], header["m"]
    if len(body) != n * N:
        raise FormatError(f"dataset body has {len(body)} bytes, expected {n * N}")
    outcomes = np.frombuffer(body, dtype=np.uint8).reshape(n, N)
    if outcomes.size and outcomes.max() >= m:
        raise FormatError("dataset contains symbols outside the outcome alphabet")
    return header, outcomes


# -- checkpoints -----------------------------------------------------------------


def write_checkpoint(path, *, model_kind: str, meta: dict, named_arrays, cfg_hash: str):
    specs = []
    blobs = []
    for name, arr in named_arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        specs.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": FORMAT_VERSION,
        "model": model_kind,
        "dtype": "<f8",
        "meta": meta,
        "arrays": specs,
        "config_hash": cfg_hash,
    }
    with open(path, "wb") as f:
        _write_header(f, header)
        for blob in blobs:
            f.write(blob)


def read_checkpoint(path):
    """(header, {name: array}) with shape/size validation."""
    with open(path, "rb") as f:
        header = _read_header(f, CHECKPOINT_MAGIC)
        body = f.read()
    arrays = {}
    offset = 0
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * 8
        if offset + nbytes > len(body):
            raise FormatError("checkpoint body truncated")
        arrays[spec["name"]] = (
            np.frombuffer(body, dtype="<f8", count=count, offset=offset)
            .reshape(spec["shape"])
            .copy()
        )
        offset += nbytes
    if offset != len(body):
        raise FormatError("checkpoint body has trailing bytes")
    return header, arrays


def save_model(path, model, *, meta: dict, cfg_hash: str):
    from .models import GRUStack, MultinomialRBM

    if isinstance(model, GRUStack):
        kind = "gru"
        named = model.export_arrays()
        meta = dict(meta, n_qubits=model.N, m=model.m, hidden=model.H)
    elif isinstance(model, MultinomialRBM):
        kind = "rbm"
        named = [("W", model.W), ("b", model.b), ("c", model.c)]
        meta = dict(meta, n_qubits=model.N, m=model.m, n_hidden=model.n_hidden)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    write_checkpoint(path, model_kind=kind, meta=meta, named_arrays=named, cfg_hash=cfg_hash)


def load_model(path):
    """(model, header) rebuilt from a checkpoint file."""
    from .models import GRUStack, MultinomialRBM

    header, arrays = read_checkpoint(path)
    meta = header["meta"]
    if header["model"] == "gru":
        model = GRUStack(meta["n_qubits"], meta["m"], hidden=meta["hidden"], seed=0)
        model.import_arrays(arrays.items())
    elif header["model"] == "rbm":
        model = MultinomialRBM(meta["n_qubits"], meta["m"], meta["n_hidden"], seed=0)
        model.W[:] = arrays["W"]
        model.b[:] = arrays["b"]
        model.c[:] = arrays["c"]
    else:
        raise FormatError(f"unknown model kind {header['model']!r}")
    return model, header


# -- metrics CSV -------------------------------------------------------------------


def write_metrics_csv(path, rows):
    """rows: iterables matching METRICS_COLUMNS; floats get full repr precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(METRICS_COLUMNS) + "\n")
        for metric, value, stderr, n_samples, cfg in rows:
            f.write(f"{metric},{_fmt(value)},{_fmt(stderr)},{n_samples},{cfg}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))
