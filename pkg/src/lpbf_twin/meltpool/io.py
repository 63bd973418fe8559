"""Snapshot and section export in the shared container format."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..container import read_container, write_container
from ..params import ProcessParams
from .sections import PlaneGrid, PlaneSection
from .solver import LaserState, SimDomain, TemperatureField3D


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_snapshot(field: TemperatureField3D, path) -> Path:
    """Write the 3D temperature field plus a JSON sidecar with params and diagnostics."""
    meta = {
        "domain": field.domain.to_dict(),
        "dims": list(field.T.shape),
        "spacing_um": list(field.domain.spacing),
        "origin_um": [r[0] for r in (field.domain.x_range, field.domain.y_range,
                                     field.domain.z_range)],
        "laser": asdict(field.laser) if field.laser else None,
        "params": field.params.to_dict() if field.params else None,
    }
    path = write_container(path, "field3d", _jsonable(meta),
                           {"temperature": field.T, "enthalpy": field.h})
    side = {"params": meta["params"], "diagnostics": _jsonable(field.diagnostics)}
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def load_snapshot(path) -> TemperatureField3D:
    header, arrays = read_container(path, kind="field3d")
    meta = header["meta"]
    params = ProcessParams(**meta["params"]) if meta.get("params") else None
    laser = LaserState(**meta["laser"]) if meta.get("laser") else None
    diag = {}
    side = sidecar_path(path)
    if side.exists():
        diag = json.loads(side.read_text()).get("diagnostics", {})
    return TemperatureField3D(SimDomain.from_dict(meta["domain"]), arrays["temperature"],
                              arrays["enthalpy"], laser, params, diag)


def save_section(section: PlaneSection, path, params: ProcessParams | None = None) -> Path:
    meta = {"grid": section.grid.to_dict(), "clamped": section.clamped,
            "params": params.to_dict() if params else None,
            "extra": _jsonable(section.meta)}
    return write_container(path, "section", meta, {"temperature": section.values})


def load_section(path) -> PlaneSection:
    header, arrays = read_container(path, kind="section")
    meta = header["meta"]
    return PlaneSection(PlaneGrid.from_dict(meta["grid"]), arrays["temperature"],
                        bool(meta["clamped"]), meta.get("extra") or {})
