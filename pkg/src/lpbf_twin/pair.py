"""The two plane surrogates evaluated together, with melt-pool features on top.

Downstream code (control, calibration, the demo) only talks to the two
methods defined here, so test stubs can stand in for trained models.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .features import (SmoothPoolFeatures, Smoothing, SriConstants, _TS, UM, roughness, sri)
from .fno.io import load_model
from .fno.model import SurrogateModel

CHUNK = 64


class SurrogatePair:
    def __init__(self, model_xy: SurrogateModel, model_xz: SurrogateModel):
        if model_xy.plane != "xy" or model_xz.plane != "xz":
            raise ValueError("expected an x-y model and an x-z model")
        self.xy, self.xz = model_xy, model_xz

    @classmethod
    def load(cls, path_xy, path_xz) -> "SurrogatePair":
        return cls(load_model(Path(path_xy)), load_model(Path(path_xz)))

    def sections(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Predicted x-y and x-z temperatures (kelvin) for a (batch, 4) array."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out_xy, out_xz = [], []
        for s in range(0, len(xi), CHUNK):
            out_xy.append(self.xy.predict_kelvin(xi[s:s + CHUNK]))
            out_xz.append(self.xz.predict_kelvin(xi[s:s + CHUNK]))
        return np.concatenate(out_xy), np.concatenate(out_xz)

    def smooth_features(self, xi, smoothing: Smoothing = Smoothing(), T_s: float = _TS):
        """Smooth T_peak (K), L and W (m) per batch member plus a backward closure.

        ``backward(g_peak, g_L, g_W)`` returns d/d(P, V, T_sub, alpha), shape (batch, 4).
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        T_xy, tape_xy = self.xy.forward_with_tape(xi)
        T_xz, tape_xz = self.xz.forward_with_tape(xi)
        feats = SmoothPoolFeatures(self.xy.grid, self.xz.grid, T_s, smoothing)
        out = feats.forward(T_xy, T_xz)

        def backward(g_peak=0.0, g_L=0.0, g_W=0.0):
            g_xy, g_xz = feats.backward(g_peak, g_L, g_W)
            return (self.xy.backward_to_inputs(tape_xy, g_xy)
                    + self.xz.backward_to_inputs(tape_xz, g_xz))

        return out, backward

    def hard_features(self, xi, constants: SriConstants = SriConstants(), T_s: float = _TS):
        """Indicator-based features, SRI and Ra per batch member.

        Cold pools (nothing above solidus) get NaN SRI/Ra and ``cold=True``.
        """
        T_xy, T_xz = self.sections(xi)
        return hard_features_from_sections(T_xy, T_xz, self.xy.grid, self.xz.grid, constants, T_s)


FEATURES = ("T_peak", "L", "W")


def feature_slopes(pair, xi, smoothing: Smoothing = Smoothing(), T_s: float = _TS,
                   which=FEATURES, chunk: int = CHUNK):
    """Smooth features plus each sample's own gradient rows, in bounded memory.

    Returns ``(feats, slopes)`` where ``slopes[name]`` has shape (batch, 4).
    Batch members do not interact, so every chunk's tape is released as soon
    as its gradients are read off.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    feats = {k: [] for k in FEATURES}
    slopes = {k: [] for k in which}
    for s in range(0, len(xi), chunk):
        f, backward = pair.smooth_features(xi[s:s + chunk], smoothing, T_s)
        for k in FEATURES:
            feats[k].append(np.asarray(f[k], dtype=float))
        for k in which:
            g = [1.0 if k == name else 0.0 for name in FEATURES]
            slopes[k].append(backward(*g))
    return ({k: np.concatenate(v) for k, v in feats.items()},
            {k: np.concatenate(v) for k, v in slopes.items()})


def hard_features_from_sections(T_xy, T_xz, grid_xy, grid_xz,
                                constants: SriConstants = SriConstants(), T_s: float = _TS):
    molten_xy = T_xy > T_s
    molten_xz = T_xz > T_s
    L = np.maximum(molten_xy.sum(axis=1).max(axis=1) * grid_xy.step0,
                   molten_xz.sum(axis=1).max(axis=1) * grid_xz.step0) * UM
    W = molten_xy.sum(axis=2).max(axis=1) * grid_xy.step1 * UM
    T_peak = np.maximum(T_xy.max(axis=(1, 2)), T_xz.max(axis=(1, 2)))
    cold = (L <= 0) | (W <= 0) | (T_peak <= T_s)
    s = np.full(L.shape, np.nan)
    ra = np.full(L.shape, np.nan)
    clamped = np.zeros(L.shape, dtype=bool)
    ok = ~cold
    if ok.any():
        s[ok] = sri(T_peak[ok], L[ok], W[ok], constants, T_s)
        ra[ok], clamped[ok] = roughness(s[ok], return_flag=True)
    return {"T_peak": T_peak, "L": L, "W": W, "SRI": s, "Ra": ra, "cold": cold,
            "ra_clamped": clamped}
