"""Roughness-minimizing (P, V) search through the surrogates, and process windows."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import _TS, Smoothing, SriConstants, roughness, roughness_slope, sri, sri_partials
from .optim import Adam

# SI evaluation of the index lands ~25x below the scale the roughness fit expects
INDEX_SCALE_KAPPA = 25.0
SENTINEL = -1.0


class OptimizationError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ControlConfig:
    phi: float = 50.0  # um per unit penalty
    T_t1: float = 3000.0
    T_t2: float = 3400.0
    P_bounds: tuple = (100.0, 500.0)
    V_bounds: tuple = (0.5, 2.5)
    lr: float = 0.01  # normalized units
    max_iter: int = 200
    tol: float = 1e-5  # relative objective change
    barrier: float = 1e3  # um, cold-pool objective
    smoothing: Smoothing = Smoothing(tau_T=50.0)
    constants: SriConstants = SriConstants(kappa=INDEX_SCALE_KAPPA)

    def __post_init__(self):
        if not self.T_t1 < self.T_t2:
            raise ValueError("T_t1 must be below T_t2")
        for lo, hi in (self.P_bounds, self.V_bounds):
            if not lo < hi:
                raise ValueError("empty control bounds")

    def to_dict(self) -> dict:
        return asdict(self)

    def normalize(self, P, V):
        (p0, p1), (v0, v1) = self.P_bounds, self.V_bounds
        return np.array([(P - p0) / (p1 - p0), (V - v0) / (v1 - v0)])

    def denormalize(self, u):
        (p0, p1), (v0, v1) = self.P_bounds, self.V_bounds
        return p0 + (p1 - p0) * u[0], v0 + (v1 - v0) * u[1]

    @property
    def scale(self):
        return np.array([self.P_bounds[1] - self.P_bounds[0], self.V_bounds[1] - self.V_bounds[0]])


def penalty_phi(T_peak, T_t1: float, T_t2: float):
    """0 below T_t1, 1 above T_t2, sine ramp with flat ends in between."""
    if not T_t1 < T_t2:
        raise ValueError("T_t1 must be below T_t2")
    T = np.asarray(T_peak, dtype=float)
    r = np.clip((T - T_t1) / (T_t2 - T_t1), 0.0, 1.0)
    out = 0.5 + 0.5 * np.sin(math.pi * r - 0.5 * math.pi)
    return out if out.ndim else float(out)


def penalty_phi_slope(T_peak, T_t1: float, T_t2: float):
    T = np.asarray(T_peak, dtype=float)
    span = T_t2 - T_t1
    inside = (T > T_t1) & (T < T_t2)
    d = np.where(inside, 0.5 * math.pi / span * np.cos(math.pi * (T - T_t1) / span - 0.5 * math.pi), 0.0)
    return d if d.ndim else float(d)


@dataclass
class Evaluation:
    value: float
    grad: np.ndarray | None  # d/d(P, V) in physical units
    T_peak: float
    Ra: float
    flags: tuple = ()


def objective(P, V, T_sub, alpha, pair, config: ControlConfig = ControlConfig(),
              smooth: bool = True, T_s: float = _TS) -> Evaluation:
    """Ra + phi * penalty(T_peak) at one (P, V).

    The smooth variant carries the gradient; the hard variant is what the
    process window reports. Cold pools return ``barrier`` plus the solidus
    shortfall so the value stays finite and points back towards melting.
    """
    xi = np.array([[P, V, T_sub, alpha]], dtype=float)
    if not smooth:
        h = pair.hard_features(xi, config.constants, T_s)
        Tp = float(h["T_peak"][0])
        pen = config.phi * penalty_phi(Tp, config.T_t1, config.T_t2)
        if h["cold"][0]:
            return Evaluation(config.barrier + max(0.0, T_s - Tp) + pen, None, Tp, math.nan,
                              ("cold_pool",))
        flags = ("ra_clamped",) if h["ra_clamped"][0] else ()
        return Evaluation(float(h["Ra"][0]) + pen, None, Tp, float(h["Ra"][0]), flags)

    feats, backward = pair.smooth_features(xi, config.smoothing, T_s)
    Tp, L, W = (float(feats[k][0]) for k in ("T_peak", "L", "W"))
    pen = config.phi * penalty_phi(Tp, config.T_t1, config.T_t2)
    dpen = config.phi * penalty_phi_slope(Tp, config.T_t1, config.T_t2)
    grid_xy = getattr(pair, "xy", None)
    dx = grid_xy.grid.step0 * 1e-6 if grid_xy is not None else 0.0
    dy = grid_xy.grid.step1 * 1e-6 if grid_xy is not None else 0.0
    if Tp <= T_s or L < dx or W < dy:
        g = backward(-1.0 + dpen, 0.0, 0.0)[0]
        return Evaluation(config.barrier + max(0.0, T_s - Tp) + pen, g[:2], Tp, math.nan,
                          ("cold_pool",))
    s = sri(Tp, L, W, config.constants, T_s)
    ra, clamped = roughness(s, return_flag=True)
    dra = float(roughness_slope(s))
    d_peak, d_L, d_W = sri_partials(s, Tp, L, W, T_s)
    g = backward(dra * d_peak + dpen, dra * d_L, dra * d_W)[0]
    return Evaluation(ra + pen, g[:2], Tp, ra, ("ra_clamped",) if clamped else ())


def objective_map(P, V, T_sub, alpha, pair, config: ControlConfig = ControlConfig(),
                  smooth: bool = True, T_s: float = _TS) -> np.ndarray:
    """Objective values (no gradients) at many (P, V) points, batched.

    Same formula as :func:`objective`; used for grid searches.
    """
    from .pair import feature_slopes

    P, V = np.broadcast_arrays(np.asarray(P, dtype=float), np.asarray(V, dtype=float))
    shape = P.shape
    xi = np.column_stack([P.ravel(), V.ravel(), np.full(P.size, T_sub), np.full(P.size, alpha)])
    if smooth:
        feats, _ = feature_slopes(pair, xi, config.smoothing, T_s, which=())
        Tp, L, W = feats["T_peak"], feats["L"], feats["W"]
        grid_xy = getattr(pair, "xy", None)
        dx = grid_xy.grid.step0 * 1e-6 if grid_xy is not None else 0.0
        dy = grid_xy.grid.step1 * 1e-6 if grid_xy is not None else 0.0
        cold = (Tp <= T_s) | (L < dx) | (W < dy)
    else:
        h = pair.hard_features(xi, config.constants, T_s)
        Tp, L, W, cold = h["T_peak"], h["L"], h["W"], np.asarray(h["cold"], dtype=bool)
    pen = config.phi * penalty_phi(Tp, config.T_t1, config.T_t2)
    out = config.barrier + np.maximum(0.0, T_s - Tp) + pen
    ok = ~cold
    if ok.any():
        ra = (roughness(sri(Tp[ok], L[ok], W[ok], config.constants, T_s)) if smooth
              else h["Ra"][ok])
        out[ok] = ra + pen[ok]
    return out.reshape(shape)


@dataclass
class OptimResult:
    P: float
    V: float
    value: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    flags: tuple = ()

    TRACE_FIELDS = ("iter", "P", "V", "objective", "T_peak", "Ra")

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.TRACE_FIELDS)
            for row in self.trace:
                w.writerow([row[k] for k in self.TRACE_FIELDS])

    def summary(self) -> dict:
        return {"P": self.P, "V": self.V, "objective": self.value, "iterations": self.iterations,
                "converged": self.converged, "flags": list(self.flags)}


def optimize_pv(P0, V0, T_sub, alpha, pair, config: ControlConfig = ControlConfig(),
                objective_fn=None) -> OptimResult:
    """Adam on normalized (P, V), projected onto the box after every step.

    ``objective_fn(P, V) -> Evaluation`` replaces the surrogate objective
    (used to check the optimizer on analytic bowls). Returns the best
    iterate seen, since Adam's last step need not be its best.
    """
    if objective_fn is None:
        def objective_fn(P, V):
            return objective(P, V, T_sub, alpha, pair, config)

    u = np.clip(config.normalize(P0, V0), 0.0, 1.0)
    flags = [] if np.allclose(u, config.normalize(P0, V0)) else ["initial_projected"]
    state = {"u": u}
    opt = Adam(state, lr=config.lr)
    trace = []
    best = None
    prev = None
    converged = False
    for it in range(config.max_iter + 1):
        P, V = config.denormalize(state["u"])
        ev = objective_fn(P, V)
        trace.append({"iter": it, "P": P, "V": V, "objective": ev.value, "T_peak": ev.T_peak,
                      "Ra": ev.Ra})
        if not (math.isfinite(ev.value) and ev.grad is not None and np.all(np.isfinite(ev.grad))):
            raise OptimizationError(f"non-finite objective or gradient at iteration {it}", trace)
        if best is None or ev.value < best[2]:
            best = (P, V, ev.value)
        if prev is not None and abs(ev.value - prev) <= config.tol * max(abs(ev.value), 1e-12):
            converged = True
            break
        if it == config.max_iter:
            break
        prev = ev.value
        opt.step({"u": ev.grad * config.scale})
        np.clip(state["u"], 0.0, 1.0, out=state["u"])
    return OptimResult(best[0], best[1], best[2], it, converged, trace, tuple(flags))


@dataclass
class ProcessWindow:
    P: np.ndarray
    V: np.ndarray
    Ra: np.ndarray  # (nP, nV), SENTINEL where the pool is cold
    cold: np.ndarray
    T_sub: float
    alpha: float

    def write(self, path):
        """Matrix CSV (rows P, columns V) plus a JSON sidecar with the axes."""
        path = Path(path)
        np.savetxt(path, self.Ra, delimiter=",", fmt="%.6f")
        side = {"P_W": self.P.tolist(), "V_m_s": self.V.tolist(), "T_sub_K": self.T_sub,
                "alpha": self.alpha, "sentinel": SENTINEL,
                "cold_cells": np.argwhere(self.cold).tolist()}
        path.with_suffix(".json").write_text(json.dumps(side, indent=1))
        return path


def process_window(T_sub, alpha, pair, nP: int = 40, nV: int = 25,
                   config: ControlConfig = ControlConfig(), T_s: float = _TS) -> ProcessWindow:
    """Hard-variant Ra over an evenly spaced (P, V) grid spanning the control box."""
    P = np.linspace(*config.P_bounds, nP)
    V = np.linspace(*config.V_bounds, nV)
    PP, VV = np.meshgrid(P, V, indexing="ij")
    xi = np.column_stack([PP.ravel(), VV.ravel(), np.full(PP.size, T_sub), np.full(PP.size, alpha)])
    h = pair.hard_features(xi, config.constants, T_s)
    ra = np.where(h["cold"], SENTINEL, h["Ra"]).reshape(nP, nV)
    return ProcessWindow(P, V, ra, h["cold"].reshape(nP, nV), float(T_sub), float(alpha))
