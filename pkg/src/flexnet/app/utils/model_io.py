"""
File I/O for networks and experiment outputs.

Networks use the JSON network format validated by `schemas.NetworkFile`.
Tables are written as CSV with a versioned header comment; every write goes
through a temporary file in the destination directory followed by a rename,
so a failed run never leaves a partial file behind.
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
from pydantic import ValidationError

from ..exceptions import ModelValidationError
from ..models import BipartiteGraph, DeparturePartition, NetworkModel, RateSpec
from ..schemas import NetworkFile

logger = logging.getLogger(__name__)

CSV_HEADER = "# flexnet-csv v1"

PathLike = Union[str, Path]


def model_from_dict(data: Dict[str, Any]) -> NetworkModel:
    """Validate a decoded JSON network and build the model"""
    try:
        spec = NetworkFile.model_validate(data)
    except ValidationError as e:
        raise ModelValidationError(f"invalid network file: {e}") from e

    graph = BipartiteGraph(
        dispatchers=tuple(d.id for d in spec.dispatchers),
        servers=tuple(u.id for u in spec.servers),
        edges=tuple((d, u) for d, u in spec.edges),
    )
    rates = RateSpec(
        lam={d.id: d.rate for d in spec.dispatchers},
        mu={u.id: u.rate for u in spec.servers},
    )
    partition = None
    if spec.partition is not None:
        partition = DeparturePartition(tuple(tuple(block) for block in spec.partition))
    return NetworkModel(graph=graph, rates=rates, partition=partition)


def load_model(path: PathLike) -> NetworkModel:
    """Load and validate a network from a JSON file"""
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"{path}: not valid JSON ({e})") from e
    model = model_from_dict(data)
    logger.debug(f"Loaded {path}: {len(model.dispatchers)} dispatchers, {len(model.servers)} servers")
    return model


def dump_model(model: NetworkModel) -> Dict[str, Any]:
    """Inverse of model_from_dict"""
    return {
        "dispatchers": [{"id": d, "rate": model.rates.lam[d]} for d in model.dispatchers],
        "servers": [{"id": u, "rate": model.rates.mu[u]} for u in model.servers],
        "edges": [[d, u] for d, u in model.graph.edges],
        "partition": [list(block) for block in model.partition.blocks],
    }


def _atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: PathLike, payload: Any) -> Path:
    return _atomic_write_text(path, json.dumps(payload, indent=2, default=str) + "\n")


def save_model(model: NetworkModel, path: PathLike) -> Path:
    return write_json(path, dump_model(model))


def render_csv(frame: pd.DataFrame) -> str:
    return CSV_HEADER + "\n" + frame.to_csv(index=False)


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    out = _atomic_write_text(path, render_csv(frame))
    logger.info(f"Wrote {len(frame)} rows to {out}")
    return out


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
