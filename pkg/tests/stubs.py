"""Analytic stand-ins for a trained surrogate pair.

They expose the same two methods the downstream modules call, with
closed-form features so results can be checked by hand.
"""
import numpy as np

from lpbf_twin.features import _TS, SriConstants, roughness, sri

UM = 1e-6


class LinearPair:
    """L = (a*alpha + b) * g(P, V) um with g = P / (200 V); W = ratio * L.

    T_peak = T_sub + c_T * alpha * P / V. With fixed (P, V) the length is
    linear in alpha, so length statistics are available in closed form.
    ``ra_line=(r0, r1)`` replaces the roughness fit with Ra = r0 + r1*alpha.
    """

    def __init__(self, a=1000.0, b=150.0, c_T=20.0, ratio=0.4, ra_line=None):
        self.a, self.b, self.c_T, self.ratio = a, b, c_T, ratio
        self.ra_line = ra_line
        self.calls = 0

    def _fields(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        P, V, T_sub, alpha = xi.T
        g = P / (200.0 * V)
        L = (self.a * alpha + self.b) * g * UM
        Tp = T_sub + self.c_T * alpha * P / V
        # d/d(P, V, T_sub, alpha) per sample
        dL = np.column_stack([L / P, -L / V, np.zeros_like(P), self.a * g * UM])
        dT = np.column_stack([self.c_T * alpha / V, -self.c_T * alpha * P / V ** 2,
                              np.ones_like(P), self.c_T * P / V])
        return Tp, L, self.ratio * L, dT, dL, self.ratio * dL

    def smooth_features(self, xi, smoothing=None, T_s=_TS):
        self.calls += 1
        Tp, L, W, dT, dL, dW = self._fields(xi)

        def backward(g_peak=0.0, g_L=0.0, g_W=0.0):
            gp, gl, gw = (np.asarray(g, float).reshape(-1, 1) for g in (g_peak, g_L, g_W))
            return gp * dT + gl * dL + gw * dW

        return {"T_peak": Tp, "L": L, "W": W}, backward

    def hard_features(self, xi, constants=SriConstants(), T_s=_TS):
        Tp, L, W, *_ = self._fields(xi)
        cold = (Tp <= T_s) | (L <= 0)
        s = np.full(L.shape, np.nan)
        ra = np.full(L.shape, np.nan)
        clamped = np.zeros(L.shape, dtype=bool)
        ok = ~cold
        if ok.any():
            s[ok] = sri(Tp[ok], L[ok], W[ok], constants, T_s)
            ra[ok], clamped[ok] = roughness(s[ok], return_flag=True)
        if self.ra_line is not None:
            alpha = np.atleast_2d(np.asarray(xi, float))[:, 3]
            ra = self.ra_line[0] + self.ra_line[1] * alpha
        return {"T_peak": Tp, "L": L, "W": W, "SRI": s, "Ra": ra, "cold": cold,
                "ra_clamped": clamped}
