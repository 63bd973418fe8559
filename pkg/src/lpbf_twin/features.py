"""Melt-pool scalars, surface roughness index and the roughness fit.

Hard variants (indicator counts, exact max) are the reporting ground truth.
Smooth variants replace the indicator with a logistic step and max with
log-sum-exp so that gradients reach the section values; they carry an
explicit backward pass used by the optimizer and the calibration.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .meltpool.sections import PlaneSection
from .thermo import MaterialProps

UM = 1e-6
_TS = MaterialProps().T_solidus

# roughness fit: low and high branch (slope, intercept), breakpoint
RA_BREAK = 0.168
RA_LOW = (234.456, -25.123)
RA_HIGH = (18.477, 10.925)


class UndefinedPoolError(ValueError):
    pass


@dataclass(frozen=True)
class SriConstants:
    L_hat: float = 50e-6  # m
    beta: float = 1.1
    H_hat: float = 150.0  # J/m^2
    gamma_T: float = 0.00035  # N/(m K)
    latent: float = 4.23e5  # J/kg
    kappa: float = 1.0  # unit-calibration prefactor

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")


@dataclass(frozen=True)
class Smoothing:
    tau_peak: float = 10.0  # K, log-sum-exp temperature for T_peak
    tau_T: float = 5.0  # K, logistic width of the molten indicator
    tau_len: float = 0.1  # fraction of grid spacing, soft max over chords


@dataclass
class MeltPoolState:
    T_peak: float
    L: float  # m
    W: float  # m
    epsilon: float | None
    F: float | None
    SRI: float | None
    Ra: float | None
    flags: tuple = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self) | {"flags": list(self.flags)}, sort_keys=True)

    CSV_FIELDS = ("T_peak", "L", "W", "epsilon", "F", "SRI", "Ra", "flags")

    def csv_row(self) -> list:
        return [getattr(self, f) if f != "flags" else "|".join(self.flags)
                for f in self.CSV_FIELDS]


def _split(sections):
    xy, xz = sections
    return xy, xz


# ---------------------------------------------------------------- hard variants

def peak_temperature(sections, smooth: bool = False, tau: float = 10.0) -> float:
    xy, xz = _split(sections)
    if not smooth:
        return float(max(xy.values.max(), xz.values.max()))
    allv = np.concatenate([xy.values.ravel(), xz.values.ravel()])
    return float(tau * logsumexp(allv / tau))


def _chords(values, step_um, T_s):
    """Molten chord length per row (axis 0 runs along the chord)."""
    return step_um * UM * np.count_nonzero(values > T_s, axis=0)


def pool_length(sections, T_s: float = _TS, smooth: bool = False,
                smoothing: Smoothing = Smoothing()) -> float:
    xy, xz = _split(sections)
    if smooth:
        feats = SmoothPoolFeatures(xy.grid, xz.grid, T_s, smoothing)
        return float(feats.forward(xy.values, xz.values)["L"])
    return float(max(_chords(xy.values, xy.grid.step0, T_s).max(),
                     _chords(xz.values, xz.grid.step0, T_s).max()))


def pool_width(xy: PlaneSection, T_s: float = _TS, smooth: bool = False,
               smoothing: Smoothing = Smoothing()) -> float:
    if smooth:
        feats = SmoothPoolFeatures(xy.grid, None, T_s, smoothing)
        return float(feats.forward(xy.values, None)["W"])
    return float(_chords(xy.values.T, xy.grid.step1, T_s).max())


def marangoni_force(T_peak: float, L: float, T_s: float = _TS,
                    gamma_T: float = SriConstants.gamma_T) -> float:
    if not T_peak > T_s:
        raise UndefinedPoolError(f"T_peak={T_peak} K does not exceed solidus {T_s} K")
    if not L > 0:
        raise UndefinedPoolError("pool length must be positive")
    return gamma_T * (T_peak - T_s) * math.pi * L / 2.0


def sri(T_peak, L, W, constants: SriConstants = SriConstants(), T_s: float = _TS):
    """Surface roughness index from peak temperature and pool length/width (m).

    Works elementwise on arrays.
    """
    T_peak, L, W = (np.asarray(a, dtype=float) for a in (T_peak, L, W))
    for name, v in (("L", L), ("W", W), ("T_peak - T_s", T_peak - T_s)):
        if np.any(~(v > 0)):
            raise ValueError(f"sri undefined: {name} must be positive")
    c = constants
    eps = L / W
    val = (c.kappa * c.latent * c.L_hat ** 2 * eps ** 0.25
           * np.sqrt(2 * c.beta / (c.H_hat * c.gamma_T * math.pi * L * (T_peak - T_s))))
    return val if val.ndim else float(val)


def sri_partials(value, T_peak, L, W, T_s: float = _TS):
    """d SRI / d(T_peak, L, W); SRI scales as L^-1/4 W^-1/4 (T_peak - T_s)^-1/2."""
    return (-0.5 * value / (T_peak - T_s), -0.25 * value / L, -0.25 * value / W)


def roughness(s, return_flag: bool = False):
    """Bi-linear roughness fit Ra (um) of the index, clamped below at zero."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("roughness index must be non-negative")
    raw = np.where(s < RA_BREAK, RA_LOW[0] * s + RA_LOW[1], RA_HIGH[0] * s + RA_HIGH[1])
    clamped = raw < 0
    ra = np.where(clamped, 0.0, raw)
    ra = ra if ra.ndim else float(ra)
    if return_flag:
        return ra, (clamped if clamped.ndim else bool(clamped))
    return ra


def roughness_slope(s):
    s = np.asarray(s, dtype=float)
    raw = np.where(s < RA_BREAK, RA_LOW[0] * s + RA_LOW[1], RA_HIGH[0] * s + RA_HIGH[1])
    return np.where(raw < 0, 0.0, np.where(s < RA_BREAK, RA_LOW[0], RA_HIGH[0]))


def extract_state(sections, constants: SriConstants = SriConstants(),
                  T_s: float = _TS) -> MeltPoolState:
    """Hard-variant melt-pool state; undefined quantities are None and flagged."""
    xy, _ = _split(sections)
    Tp = peak_temperature(sections)
    L = pool_length(sections, T_s)
    W = pool_width(xy, T_s)
    flags = []
    eps = F = s = ra = None
    if W > 0:
        eps = L / W
    if L > 0 and W > 0 and Tp > T_s:
        F = marangoni_force(Tp, L, T_s, constants.gamma_T)
        s = sri(Tp, L, W, constants, T_s)
        ra, clamped = roughness(s, return_flag=True)
        if clamped:
            flags.append("ra_clamped")
    else:
        flags.append("cold_pool")
    if xy.clamped or sections[1].clamped:
        flags.append("section_clamped")
    return MeltPoolState(Tp, L, W, eps, F, s, ra, tuple(flags))


# -------------------------------------------------------------- smooth variants

class SmoothPoolFeatures:
    """Batched smooth T_peak, L, W with a hand-written backward pass.

    ``forward`` accepts arrays shaped ``(..., n0, n1)`` for each plane (the
    x-z plane may be ``None`` when only W is wanted) and caches what
    ``backward`` needs.
    """

    def __init__(self, grid_xy, grid_xz, T_s: float = _TS, smoothing: Smoothing = Smoothing()):
        self.grid_xy, self.grid_xz = grid_xy, grid_xz
        self.T_s = T_s
        self.sm = smoothing
        self._cache = None

    def forward(self, xy, xz):
        sm, T_s = self.sm, self.T_s
        gx = self.grid_xy
        dx = gx.step0 * UM
        dy = gx.step1 * UM
        tau_Lx = sm.tau_len * dx
        tau_Wy = sm.tau_len * dy
        batch_shape = xy.shape[:-2]

        planes = [xy] if xz is None else [xy, xz]
        flat = np.concatenate([p.reshape(batch_shape + (-1,)) for p in planes], axis=-1)
        Tp = sm.tau_peak * logsumexp(flat / sm.tau_peak, axis=-1)
        w_peak = np.exp(flat / sm.tau_peak - (Tp / sm.tau_peak)[..., None])

        ind = [expit((p - T_s) / sm.tau_T) for p in planes]
        # chords along x for every row of every plane
        rows = np.concatenate([dx * i.sum(axis=-2) for i in ind], axis=-1)
        L = tau_Lx * logsumexp(rows / tau_Lx, axis=-1)
        w_rows = np.exp(rows / tau_Lx - (L / tau_Lx)[..., None])
        cols = dy * ind[0].sum(axis=-1)
        W = tau_Wy * logsumexp(cols / tau_Wy, axis=-1)
        w_cols = np.exp(cols / tau_Wy - (W / tau_Wy)[..., None])

        self._cache = dict(planes=planes, ind=ind, w_peak=w_peak, w_rows=w_rows,
                           w_cols=w_cols, dx=dx, dy=dy, batch_shape=batch_shape)
        return {"T_peak": Tp, "L": L, "W": W}

    def backward(self, g_peak=0.0, g_L=0.0, g_W=0.0):
        """Gradients of ``g_peak*T_peak + g_L*L + g_W*W`` w.r.t. each plane."""
        c = self._cache
        planes, ind = c["planes"], c["ind"]
        bs = c["batch_shape"]
        g_peak, g_L, g_W = (np.broadcast_to(np.asarray(g, float), bs) for g in (g_peak, g_L, g_W))
        dstep = [i * (1.0 - i) / self.sm.tau_T for i in ind]
        grads = []
        off_flat = 0
        off_row = 0
        for k, p in enumerate(planes):
            n0, n1 = p.shape[-2:]
            wp = c["w_peak"][..., off_flat:off_flat + n0 * n1].reshape(bs + (n0, n1))
            off_flat += n0 * n1
            wr = c["w_rows"][..., off_row:off_row + n1]
            off_row += n1
            g = g_peak[..., None, None] * wp
            g = g + (g_L[..., None] * wr)[..., None, :] * c["dx"] * dstep[k]
            if k == 0:
                g = g + (g_W[..., None] * c["w_cols"])[..., :, None] * c["dy"] * dstep[k]
            grads.append(g)
        return grads if len(grads) == 2 else (grads[0], None)
