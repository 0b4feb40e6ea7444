"""Self-describing binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..7    magic \"DIFFCAST\"
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..15  uint32 header length in bytes
    header        UTF-8 JSON: {"config": {..}, "meta": {epoch, best_val,
                  trained}, "groups": [{"name", "shape"}, ...]}
    payload       per group, in header order: uint64 value count followed
                  by count float64 values, little-endian

Groups hold the schedule's beta array ("schedule.beta"), every parameter
and state array of the model, and the optimizer moments. Load followed by
save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import CheckpointError
from .nn import Adam, load_arrays
from .pipeline import Checkpoint, ForecastModel, ModelConfig
from .schedule import schedule_from_beta

MAGIC = b"DIFFCAST"
FORMAT_VERSION = 1


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    arrays = checkpoint.arrays()
    meta = {"epoch": checkpoint.epoch,
            "best_val": None if not np.isfinite(checkpoint.best_val) else checkpoint.best_val,
            "trained": checkpoint.trained}
    header = {
        "config": asdict(checkpoint.config),
        "meta": meta,
        "groups": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays.values():
            flat = np.ascontiguousarray(arr, dtype="<f8").reshape(-1)
            fh.write(struct.pack("<Q", flat.size))
            fh.write(flat.tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    version, header_len = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc

    arrays: dict[str, np.ndarray] = {}
    offset = 16 + header_len
    for group in header["groups"]:
        if offset + 8 > len(raw):
            raise CheckpointError("truncated checkpoint payload")
        (count,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError("truncated checkpoint payload")
        arr = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64)
        arrays[group["name"]] = arr.reshape(group["shape"])
        offset = end
    if offset != len(raw):
        raise CheckpointError("trailing bytes after checkpoint payload")

    try:
        config = ModelConfig(**header["config"]).validate()
    except TypeError as exc:
        raise CheckpointError(f"unrecognized config field in checkpoint: {exc}") from exc
    schedule = schedule_from_beta(arrays.pop("schedule.beta"))
    if schedule.K != config.k_steps:
        raise CheckpointError(f"schedule length {schedule.K} disagrees with config k_steps {config.k_steps}")

    model = ForecastModel(config, np.random.default_rng(0))
    try:
        load_arrays(model, arrays)
    except Exception as exc:
        raise CheckpointError(f"checkpoint parameters do not fit the model: {exc}") from exc
    optimizer = Adam(model.trainable_params(), learning_rate=config.learning_rate)
    try:
        optimizer.load_state_arrays(arrays)
    except KeyError as exc:
        raise CheckpointError(f"missing optimizer group in checkpoint: {exc}") from exc

    meta = header["meta"]
    return Checkpoint(config=config, schedule=schedule, model=model, optimizer=optimizer,
                      epoch=int(meta["epoch"]),
                      best_val=float("inf") if meta["best_val"] is None else float(meta["best_val"]),
                      trained=bool(meta["trained"]))
