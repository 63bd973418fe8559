"""Virtual cone build: controlled vs fixed-parameter printing on a lumped substrate model."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .calibrate import GaussianSpec, propagate_uq
from .control import ControlConfig, OptimizationError, optimize_pv
from .params import SWEEP_BOUNDS
from .thermo import MaterialProps

T_AMBIENT = 300.0
UM = 1e-6
SENTINEL = -1.0


@dataclass(frozen=True)
class DemoConfig:
    """Cone geometry (um), scan settings and substrate-model constants.

    The substrate model is a lumped recurrence: the thermally active top
    slab (depth ``active_depth``) stores the absorbed energy of each layer
    group, a fraction ``efficiency`` of which is retained, and relaxes to
    ambient with a time constant that grows linearly with build height.
    """

    base_radius: float = 10000.0
    top_radius: float = 3000.0
    height: float = 30000.0
    layer_thickness: float = 30.0
    layers_per_step: int = 10
    P0: float = 300.0
    V0: float = 1.65
    hatch: float = 100.0  # um
    dwell: float = 10.0  # s per layer (recoating)
    active_depth: float = 5000.0  # um
    efficiency: float = 0.035
    tau_base: float = 100.0  # s
    tau_growth: float = 5.0  # tau at the top = tau_base * (1 + tau_growth)
    control: bool = True
    control_config: ControlConfig = ControlConfig(max_iter=40)
    alpha: GaussianSpec = GaussianSpec.from_sigma(0.3, 0.02)
    uq_samples: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.layers_per_step < 1:
            raise ValueError("layers_per_step must be >= 1")
        for k in ("base_radius", "top_radius", "height", "layer_thickness", "hatch",
                  "active_depth", "tau_base"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.height / (self.layer_thickness * self.layers_per_step)))

    def radius(self, h_um: float) -> float:
        f = min(max(h_um / self.height, 0.0), 1.0)  # base radius below the part
        return self.base_radius + (self.top_radius - self.base_radius) * f

    def area(self, h_um: float) -> float:
        return math.pi * (self.radius(h_um) * UM) ** 2

    def slab_heat_capacity(self, h_um: float, props: MaterialProps) -> float:
        """rho*c_p of the material within ``active_depth`` below height h (J/K).

        Below the part's base the slab continues into a base of the same radius.
        """
        lo = h_um - self.active_depth
        r0, r1 = self.radius(lo) * UM, self.radius(h_um) * UM
        vol = math.pi * (h_um - lo) * UM * (r0 * r0 + r0 * r1 + r1 * r1) / 3.0
        return props.density * props.cp_solid * vol

    def to_dict(self) -> dict:
        return asdict(self)


def substrate_update(T_sub, P, V, h_um, config: DemoConfig, alpha: float,
                     props: MaterialProps = MaterialProps()) -> float:
    """Substrate temperature after the next layer group at build height ``h_um``."""
    n = config.layers_per_step
    h_top = h_um + n * config.layer_thickness
    A = config.area(h_um + 0.5 * n * config.layer_thickness)
    s = config.hatch * UM
    scan_time = A / (s * V) if V > 0 else 0.0
    dt = n * (scan_time + config.dwell)
    tau = config.tau_base * (1.0 + config.tau_growth * min(h_um / config.height, 1.0))
    C = config.slab_heat_capacity(h_top, props)
    heat = config.efficiency * alpha * P * A * n / (V * s * C) if P > 0 else 0.0
    return T_AMBIENT + (T_sub - T_AMBIENT) * math.exp(-dt / tau) + heat


TRACE_FIELDS = ("step", "T_sub_K", "P_W", "V_m_s", "T_peak_K", "Ra_um", "flags")
UQ_FIELDS = ("T_peak_p5", "T_peak_p95", "Ra_p5", "Ra_p95")


@dataclass
class BuildTrace:
    controlled: bool
    rows: list = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def write(self, path):
        uq = any(k in r for r in self.rows for k in UQ_FIELDS)
        cols = TRACE_FIELDS + (UQ_FIELDS if uq else ())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow(["|".join(r[c]) if c == "flags" else r.get(c, "") for c in cols])
        return Path(path)


def _evaluate(pair, P, V, T_sub, alpha, cfg: ControlConfig):
    h = pair.hard_features(np.array([[P, V, T_sub, alpha]]), cfg.constants)
    flags = []
    if h["cold"][0]:
        flags.append("cold_pool")
        ra = SENTINEL
    else:
        ra = float(h["Ra"][0])
        if h["ra_clamped"][0]:
            flags.append("ra_clamped")
    return float(h["T_peak"][0]), ra, flags


def _run_branch(config: DemoConfig, pair, control: bool) -> BuildTrace:
    cfg = config.control_config
    alpha = config.alpha.mu
    trace = BuildTrace(control)
    T_sub = T_AMBIENT
    P, V = config.P0, config.V0
    lo, hi = SWEEP_BOUNDS["T_sub"]
    for k in range(config.steps):
        h_um = k * config.layers_per_step * config.layer_thickness
        flags = []
        if not lo <= T_sub <= hi:
            flags.append("T_sub_extrapolated")
        if control:
            try:
                res = optimize_pv(P, V, T_sub, alpha, pair, cfg)
                P, V = res.P, res.V
            except OptimizationError:
                flags.append("optimizer_fallback")
        T_peak, ra, f = _evaluate(pair, P, V, T_sub, alpha, cfg)
        row = {"step": k, "T_sub_K": T_sub, "P_W": P, "V_m_s": V, "T_peak_K": T_peak,
               "Ra_um": ra, "flags": tuple(flags + f)}
        if config.uq_samples:
            uq = propagate_uq(config.alpha, P, V, T_sub, pair, config.uq_samples,
                              config.seed + k, cfg.constants)
            row.update(T_peak_p5=uq["T_peak"]["p5"], T_peak_p95=uq["T_peak"]["p95"],
                       Ra_p5=uq["Ra"]["p5"], Ra_p95=uq["Ra"]["p95"])
        trace.rows.append(row)
        T_sub = substrate_update(T_sub, P, V, h_um, config, alpha)
    return trace


def run_demo(config: DemoConfig, pair, control_branches=None):
    """Run one trace per entry of ``control_branches`` and compare two of them.

    The comparison puts the first controlled trace against the first
    uncontrolled one, whatever their order; without both kinds it compares
    the first and last. By default the first branch is controlled when
    ``config.control`` is set and the second never is.
    """
    if control_branches is None:
        control_branches = (config.control, False)
    traces = [_run_branch(config, pair, c) for c in control_branches]
    on = [t for t in traces if t.controlled]
    off = [t for t in traces if not t.controlled]
    a, b = (on[0], off[0]) if on and off else (traces[0], traces[-1])
    return traces, compare(a, b, config)


def compare(a: BuildTrace, b: BuildTrace, config: DemoConfig) -> dict:
    ra_a, ra_b = a.column("Ra_um"), b.column("Ra_um")
    valid = (ra_a >= 0) & (ra_b >= 0)
    cfg = config.control_config
    return {
        "steps": len(a.rows),
        "ra_not_worse_fraction": float(np.mean(ra_a[valid] <= ra_b[valid])) if valid.any() else None,
        "mean_Ra": [float(ra_a[valid].mean()), float(ra_b[valid].mean())] if valid.any() else None,
        "max_T_peak": [float(a.column("T_peak_K").max()), float(b.column("T_peak_K").max())],
        "T_t2": cfg.T_t2,
        "final_T_sub": [a.rows[-1]["T_sub_K"], b.rows[-1]["T_sub_K"]],
        "flagged_steps": [sum(1 for r in t.rows if r["flags"]) for t in (a, b)],
        "controlled": [a.controlled, b.controlled],
    }


def write_outputs(traces, summary, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, t in enumerate(traces):
        name = "controlled" if t.controlled else "uncontrolled"
        if sum(x.controlled == t.controlled for x in traces) > 1:
            name += f"_{i}"
        paths.append(t.write(out_dir / f"trace_{name}.csv"))
    p = out_dir / "comparison.json"
    p.write_text(json.dumps(summary, indent=1))
    return paths + [p]

