"""
Model checkpoint file.

Layout (all integers little-endian uint32):

    magic  b"SAGERLCK"
    version
    header length, then a UTF-8 JSON header
        {"config": SageConfig, "feature_dim", "num_labels", "label_mode",
         "params": [[name, rows, cols], ...], "regressor": bool}
    parameter matrices in declaration order, row-major '<f4'
    optional section b"REGR": weight length, weight then bias as '<f8'

Parameters are stored at 32-bit precision, so a model trained at float32
reloads bit-exactly. The regressor keeps full precision.
"""

import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from sagerl.models.training import SageConfig
from sagerl.services.sage_model import SageParams
from sagerl.services.value import ValueRegressor

logger = logging.getLogger(__name__)

MAGIC = b"SAGERLCK"
VERSION = 1
REGRESSOR_TAG = b"REGR"


class CheckpointFormatError(Exception):
    """Raised when a checkpoint file is truncated, foreign or inconsistent."""

    pass


def _header(params: SageParams, has_regressor: bool) -> bytes:
    header = {
        "config": params.config.model_dump(),
        "feature_dim": params.feature_dim,
        "num_labels": params.num_labels,
        "label_mode": params.label_mode,
        "params": [[name, *p.shape] for name, p in params.named_params()],
        "regressor": has_regressor,
    }
    return json.dumps(header, sort_keys=True).encode("utf-8")


def save_checkpoint(
    path: str | Path, params: SageParams, regressor: Optional[ValueRegressor] = None
) -> None:
    """
    Write params (and optionally the value regressor) to a checkpoint file.

    Args:
        path: Target file
        params: Model parameters
        regressor: Fitted regressor of an RL run
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(params, regressor is not None)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header)))
        f.write(header)
        for _, param in params.named_params():
            f.write(np.ascontiguousarray(param.value, dtype="<f4").tobytes())
        if regressor is not None:
            weight = regressor.weight.value.reshape(-1)
            f.write(REGRESSOR_TAG)
            f.write(struct.pack("<I", len(weight)))
            f.write(np.ascontiguousarray(weight, dtype="<f8").tobytes())
            f.write(np.asarray([regressor.bias.value[0, 0]], dtype="<f8").tobytes())
    logger.info(f"Saved checkpoint ({params.num_parameters()} parameters) to {path}")


def _read_exact(f: BinaryIO, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path: str | Path) -> Tuple[SageParams, Optional[ValueRegressor]]:
    """
    Read a checkpoint written by save_checkpoint.

    Returns:
        (params at the config's precision, regressor or None)

    Raises:
        CheckpointFormatError: On a bad magic, unknown version, malformed header or short file
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointFormatError(f"checkpoint not found: {path}")

    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC), "magic") != MAGIC:
            raise CheckpointFormatError(f"{path} is not a sagerl checkpoint")
        version, header_len = struct.unpack("<II", _read_exact(f, 8, "version"))
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        try:
            header = json.loads(_read_exact(f, header_len, "header").decode("utf-8"))
            config = SageConfig.model_validate(header["config"])
        except (json.JSONDecodeError, KeyError, ValidationError) as e:
            raise CheckpointFormatError(f"malformed checkpoint header: {e}") from e

        params = SageParams.initialize(
            config,
            header["feature_dim"],
            header["num_labels"],
            header["label_mode"],
            np.random.default_rng(0),
        )
        expected = [[name, *p.shape] for name, p in params.named_params()]
        if header["params"] != expected:
            raise CheckpointFormatError("parameter layout in header does not match its config")

        for name, param in params.named_params():
            count = param.size
            raw = _read_exact(f, 4 * count, name)
            values = np.frombuffer(raw, dtype="<f4").reshape(param.shape)
            param.value[...] = values.astype(param.value.dtype)

        regressor = None
        if header.get("regressor"):
            if _read_exact(f, len(REGRESSOR_TAG), "regressor tag") != REGRESSOR_TAG:
                raise CheckpointFormatError("missing regressor section")
            (length,) = struct.unpack("<I", _read_exact(f, 4, "regressor length"))
            weight = np.frombuffer(_read_exact(f, 8 * length, "regressor weight"), dtype="<f8")
            bias = np.frombuffer(_read_exact(f, 8, "regressor bias"), dtype="<f8")[0]
            regressor = ValueRegressor.from_weights(weight.copy(), float(bias))

    logger.info(f"Loaded checkpoint from {path}")
    return params, regressor
