"""Model persistence in the shared binary container."""
from __future__ import annotations

from pathlib import Path

from ..container import read_container, read_header, write_container
from ..meltpool.sections import PlaneGrid
from .model import FnoConfig, SurrogateModel

KIND = "fno_model"


def save_model(model: SurrogateModel, path) -> Path:
    meta = {
        "config": model.config.to_dict(),
        "grid": model.grid.to_dict(),
        "plane": model.plane,
        "bounds": {k: list(v) for k, v in model.bounds.items()},
        "T_scale": list(model.T_scale),
        "param_order": list(model.params),
    }
    return write_container(path, KIND, meta, model.params)


def inspect_model(path) -> dict:
    """Header metadata (config, grid, normalization) without touching the arrays."""
    return read_header(path)["meta"]


def load_model(path) -> SurrogateModel:
    header, arrays = read_container(path, kind=KIND)
    meta = header["meta"]
    order = meta["param_order"]
    if list(arrays) != order:
        raise ValueError("container arrays are not in the declared parameter order")
    config = FnoConfig(**meta["config"])
    return SurrogateModel(config, PlaneGrid.from_dict(meta["grid"]),
                          {k: arrays[k].copy() for k in order},
                          {k: tuple(v) for k, v in meta["bounds"].items()},
                          tuple(meta["T_scale"]))
