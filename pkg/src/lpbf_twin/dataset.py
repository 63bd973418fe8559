"""Training corpora: physics sweeps, the closed-form synthetic corpus, splits, storage."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .meltpool.sections import CHI_XY, CHI_XZ, PlaneGrid, PlaneSection, extract_sections
from .meltpool.solver import TOP_Z, NonConvergenceError, SimDomain, run_to_steady
from .params import NAMES, SOLVER_ENVELOPE, SWEEP_BOUNDS, ProcessParams

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
INTERPOLATION = "bilinear"
MAX_FAILED_FRACTION = 0.10


class SweepFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    """Value lists per parameter; cells enumerate P outermost, alpha innermost."""

    P: tuple
    V: tuple
    T_sub: tuple
    alpha: tuple

    def __post_init__(self):
        for n in NAMES:
            vals = tuple(float(v) for v in getattr(self, n))
            if not vals:
                raise ValueError(f"sweep list for {n} is empty")
            lo, hi = SOLVER_ENVELOPE[n]
            bad = [v for v in vals if not lo <= v <= hi]
            if bad:
                raise ValueError(f"{n} values {bad} outside solver envelope [{lo}, {hi}]")
            object.__setattr__(self, n, vals)

    def cells(self) -> list[ProcessParams]:
        return [ProcessParams(*c) for c in itertools.product(self.P, self.V, self.T_sub, self.alpha)]

    def __len__(self):
        return len(self.P) * len(self.V) * len(self.T_sub) * len(self.alpha)

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


# substrate temperatures step by 60 K up to 540 K
FULL_GRID = SweepGrid((100, 200, 300, 400, 500), (0.5, 1.0, 1.5, 2.0, 2.5),
                       (300, 360, 420, 480, 540), (0.1, 0.2, 0.3, 0.4, 0.5, 0.6))
DESK_GRID = SweepGrid((100, 300, 500), (0.5, 1.5, 2.5), (300, 420, 540), (0.1, 0.35, 0.6))


@dataclass
class Dataset:
    """Parameters plus both plane sections per record, with a train/val split."""

    params: np.ndarray  # (N, 4)
    xy: np.ndarray  # (N, *grid_xy.shape), kelvin
    xz: np.ndarray
    grid_xy: PlaneGrid = CHI_XY
    grid_xz: PlaneGrid = CHI_XZ
    is_val: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1, len(NAMES))
        n = len(self.params)
        if self.xy.shape != (n,) + self.grid_xy.shape or self.xz.shape != (n,) + self.grid_xz.shape:
            raise ValueError("section arrays do not match the record count and grids")
        if self.is_val is None:
            self.is_val = np.zeros(n, dtype=bool)
        self.is_val = np.asarray(self.is_val, dtype=bool)

    def __len__(self):
        return len(self.params)

    @property
    def train_index(self) -> np.ndarray:
        return np.flatnonzero(~self.is_val)

    @property
    def val_index(self) -> np.ndarray:
        return np.flatnonzero(self.is_val)

    def record(self, i: int):
        return (ProcessParams.from_array(self.params[i]), PlaneSection(self.grid_xy, self.xy[i]),
                PlaneSection(self.grid_xz, self.xz[i]))

    def plane(self, name: str) -> tuple[PlaneGrid, np.ndarray]:
        if name == "xy":
            return self.grid_xy, self.xy
        if name == "xz":
            return self.grid_xz, self.xz
        raise ValueError(f"unknown plane {name!r}")

    def check_split(self):
        tr, va = set(self.train_index.tolist()), set(self.val_index.tolist())
        if tr & va or len(tr) + len(va) != len(self):
            raise ValueError("train/val split is not a disjoint partition")


def split(ds: Dataset, n_val: int, seed: int = 0) -> Dataset:
    """Seeded shuffle; the last ``n_val`` shuffled records go to validation."""
    if not 0 <= n_val < len(ds):
        raise ValueError(f"n_val={n_val} must be in [0, {len(ds)})")
    order = np.random.default_rng(seed).permutation(len(ds))
    is_val = np.zeros(len(ds), dtype=bool)
    if n_val:
        is_val[order[-n_val:]] = True
    return Dataset(ds.params, ds.xy, ds.xz, ds.grid_xy, ds.grid_xz, is_val, seed, dict(ds.meta))


def save_dataset(ds: Dataset, path) -> Path:
    meta = {"grid_xy": ds.grid_xy.to_dict(), "grid_xz": ds.grid_xz.to_dict(), "seed": ds.seed,
            "names": list(NAMES), "extra": ds.meta}
    return write_container(path, "dataset", meta, {"params": ds.params, "xy": ds.xy, "xz": ds.xz,
                                                   "is_val": ds.is_val.astype(np.uint8)})


def load_dataset(path) -> Dataset:
    header, a = read_container(path, kind="dataset")
    m = header["meta"]
    ds = Dataset(a["params"], a["xy"], a["xz"], PlaneGrid.from_dict(m["grid_xy"]),
                 PlaneGrid.from_dict(m["grid_xz"]), a["is_val"].astype(bool), m["seed"],
                 m.get("extra") or {})
    ds.check_split()
    return ds


# ------------------------------------------------------------------ synthetic

@dataclass(frozen=True)
class SyntheticConstants:
    """Closed-form bump T = T_sub + c*alpha*P/V * exp(-(x/a)^2 - (q/b)^2).

    ``a = a0 + a1*V`` is the streamwise radius; ``b`` is the lateral radius
    on the x-y plane and ``depth`` replaces it on the x-z plane, where ``q``
    is the distance below the top surface.
    """

    c: float = 20.0  # K per (J/m)
    a0: float = 100.0  # um
    a1: float = 100.0  # um per (m/s)
    b: float = 80.0  # um
    depth: float = 60.0  # um


def synthetic_fields(xi: np.ndarray, grid_xy: PlaneGrid = CHI_XY, grid_xz: PlaneGrid = CHI_XZ,
                     k: SyntheticConstants = SyntheticConstants()):
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    P, V, T_sub, alpha = (xi[:, i, None, None] for i in range(4))
    amp = k.c * alpha * P / V
    a = k.a0 + k.a1 * V
    x = grid_xy.coords0[None, :, None]
    y = grid_xy.coords1[None, None, :]
    xy = T_sub + amp * np.exp(-((x / a) ** 2 + (y / k.b) ** 2))
    x = grid_xz.coords0[None, :, None]
    q = TOP_Z - grid_xz.coords1[None, None, :]
    xz = T_sub + amp * np.exp(-((x / a) ** 2 + (q / k.depth) ** 2))
    return xy, xz


def synthetic_dataset(n_train: int, n_val: int, seed: int = 0,
                      constants: SyntheticConstants = SyntheticConstants(),
                      bounds: dict = SWEEP_BOUNDS) -> Dataset:
    """Random parameters inside ``bounds`` with analytic fields on both planes."""
    n = n_train + n_val
    if n_train < 1:
        raise ValueError("need at least one training record")
    rng = np.random.default_rng(seed)
    lo = np.array([bounds[k][0] for k in NAMES])
    hi = np.array([bounds[k][1] for k in NAMES])
    xi = lo + (hi - lo) * rng.random((n, len(NAMES)))
    xy, xz = synthetic_fields(xi, k=constants)
    ds = Dataset(xi, xy, xz, meta={"source": "synthetic", "constants": asdict(constants)})
    return split(ds, n_val, seed)


# ---------------------------------------------------------------------- sweep

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_cell(args):
    """Worker body: simulate one cell, return sections or the failure message."""
    params, domain, solver_kw, keep_snapshot = args
    try:
        field3d = run_to_steady(params, domain, **solver_kw)
    except (NonConvergenceError, ValueError, FloatingPointError) as exc:
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    xy, xz = extract_sections(field3d)
    diag = {k: v for k, v in field3d.diagnostics.items() if k != "history"}
    return {"status": "ok", "xy": xy.values, "xz": xz.values,
            "clamped": [bool(xy.clamped), bool(xz.clamped)], "diagnostics": diag,
            "field": field3d if keep_snapshot else None}


def _write_manifest(out_dir: Path, manifest: dict):
    tmp = out_dir / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    os.replace(tmp, out_dir / MANIFEST)


def run_sweep(grid: SweepGrid, domain: SimDomain, out_dir, workers: int = 1,
              solver_kw: dict | None = None, keep_snapshots: bool = False,
              max_cells: int | None = None) -> Dataset:
    """Simulate every cell, writing one record file per cell plus a manifest.

    Cells whose record already exists with a matching hash are skipped, so an
    interrupted sweep resumes where it stopped. ``max_cells`` caps how many
    new cells this call simulates (useful for staged runs).
    """
    from .meltpool.io import _jsonable, save_snapshot

    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    solver_kw = dict(solver_kw or {})
    cells = grid.cells()
    mpath = out_dir / MANIFEST
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    header = {"format": 1, "grid": grid.to_dict(), "domain": _jsonable(domain.to_dict()),
              "interpolation": INTERPOLATION, "solver": _jsonable(solver_kw),
              "grid_xy": CHI_XY.to_dict(), "grid_xz": CHI_XZ.to_dict()}
    if manifest and {k: manifest.get(k) for k in header} != header:
        raise ValueError(f"{mpath} belongs to a different sweep configuration")
    entries = {e["index"]: e for e in manifest.get("cells", [])}
    manifest = dict(header, cells=[])

    def done(i):
        e = entries.get(i)
        if not e or e["status"] != "ok":
            return False
        f = out_dir / e["file"]
        return f.exists() and _sha256(f) == e["sha256"]

    todo = [i for i in range(len(cells)) if not done(i)]
    if max_cells is not None:
        todo = todo[:max_cells]
    log.info("sweep: %d cells, %d to run", len(cells), len(todo))

    def record(i, res):
        entry = {"index": i, "params": cells[i].to_dict(), "status": res["status"]}
        if res["status"] == "ok":
            rel = f"records/cell_{i:05d}.lpbf"
            meta = {"params": cells[i].to_dict(), "clamped": res["clamped"],
                    "diagnostics": _jsonable(res["diagnostics"])}
            write_container(out_dir / rel, "record", meta, {"xy": res["xy"], "xz": res["xz"]})
            entry.update(file=rel, sha256=_sha256(out_dir / rel),
                         diagnostics=meta["diagnostics"])
            if res.get("field") is not None:
                snap = save_snapshot(res["field"], out_dir / f"records/cell_{i:05d}.field.lpbf")
                entry["snapshot"] = snap.relative_to(out_dir).as_posix()
        else:
            entry["error"] = res["error"]
        entries[i] = entry
        manifest["cells"] = [entries[k] for k in sorted(entries)]
        _write_manifest(out_dir, manifest)

    jobs = [(cells[i], domain, solver_kw, keep_snapshots) for i in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in zip(todo, pool.map(_run_cell, jobs)):
                record(i, res)
    else:
        for i, job in zip(todo, jobs):
            record(i, _run_cell(job))
    manifest["cells"] = [entries[k] for k in sorted(entries)]
    _write_manifest(out_dir, manifest)

    finished = [entries[i] for i in sorted(entries)]
    failed = [e for e in finished if e["status"] != "ok"]
    if len(finished) == len(cells) and len(failed) > MAX_FAILED_FRACTION * len(cells):
        raise SweepFailedError(f"{len(failed)} of {len(cells)} cells failed")
    return load_sweep(out_dir)


def load_sweep(out_dir) -> Dataset:
    """Assemble a dataset from the successful records listed in a manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST).read_text())
    ok = [e for e in manifest["cells"] if e["status"] == "ok"]
    gxy = PlaneGrid.from_dict(manifest["grid_xy"])
    gxz = PlaneGrid.from_dict(manifest["grid_xz"])
    xi = np.array([[e["params"][k] for k in NAMES] for e in ok]).reshape(-1, len(NAMES))
    xy = np.empty((len(ok),) + gxy.shape)
    xz = np.empty((len(ok),) + gxz.shape)
    for j, e in enumerate(ok):
        _, arr = read_container(out_dir / e["file"], kind="record")
        xy[j], xz[j] = arr["xy"], arr["xz"]
    meta = {"source": "sweep", "interpolation": manifest["interpolation"],
            "failed": [e["index"] for e in manifest["cells"] if e["status"] != "ok"]}
    return Dataset(xi, xy, xz, gxy, gxz, meta=meta)
