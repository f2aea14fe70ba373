"""
Energy-Inspired Models - Checkpoint Format

Layout (all integers little-endian):

    magic        8 bytes  b"EIMCKPT\\0"
    version      uint32   currently 1
    header_len   uint32   byte length of the JSON header
    header       UTF-8 JSON {"format", "version", "config", "params": [{"name", "shape"}]}
    payloads     one float64 array per header entry, row-major, in header order
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from autograd import ParamStore
from eims import BaseEim, build_model
from models import TrainConfig
from stats import Rng


logger = logging.getLogger(__name__)

MAGIC = b"EIMCKPT\0"
VERSION = 1
INIT_STREAM = 0


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the model."""


def save_checkpoint(path: Union[str, Path], config: TrainConfig, store: ParamStore) -> Path:
    """
    Write the store's parameters with the run configuration.

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = store.state_dict()
    header = {
        "format": "eim-checkpoint",
        "version": VERSION,
        "config": config.model_dump(mode="json"),
        "params": [{"name": name, "shape": list(value.shape)} for name, value in state.items()],
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(encoded)))
        f.write(encoded)
        for value in state.values():
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    tmp.replace(path)
    logger.debug(f"Wrote checkpoint {path} ({len(state)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[TrainConfig, Dict[str, np.ndarray]]:
    """
    Read a checkpoint.

    Returns:
        (run configuration, parameter arrays by name)

    Raises:
        CheckpointError: On bad magic, unsupported version or truncated payload
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not an EIM checkpoint")
    offset = len(MAGIC)
    if len(data) < offset + 8:
        raise CheckpointError(f"{path} is truncated")
    version, header_len = struct.unpack_from("<II", data, offset)
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    offset += 8
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
        config = TrainConfig.model_validate(header["config"])
    except (ValueError, KeyError) as e:
        raise CheckpointError(f"Corrupt checkpoint header in {path}: {e}") from e
    offset += header_len

    state: Dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path} is truncated in parameter '{entry['name']}'")
        state[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path} has {len(data) - offset} trailing bytes")
    return config, state


def load_model(path: Union[str, Path]) -> Tuple[BaseEim, ParamStore, TrainConfig]:
    """
    Rebuild a model from a checkpoint.

    Raises:
        CheckpointError: If the file is malformed or its parameters do not fit the model
    """
    config, state = load_checkpoint(path)
    store = ParamStore()
    model = build_model(config, store, Rng(config.seed, (INIT_STREAM,)))
    try:
        store.load_state_dict(state)
    except ValueError as e:
        raise CheckpointError(f"Checkpoint {path} does not match a {config.model} model: {e}") from e
    logger.info(f"Loaded {config.model} model from {path}")
    return model, store, config
