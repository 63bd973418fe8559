"""NumPy implementation of the explicit enthalpy step (fallback for ``_stencil``)."""
import numpy as np


def _axis_flux(T, kc, axis):
    """Net conductive exchange along one axis, times the squared spacing."""
    n = T.shape[axis]
    out = np.zeros_like(T)
    if n == 1:
        return out
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    lo, hi = tuple(lo), tuple(hi)
    face = 0.5 * (kc[lo] + kc[hi]) * (T[hi] - T[lo])
    out[lo] += face
    out[hi] -= face
    first = [slice(None)] * 3
    last = [slice(None)] * 3
    first[axis] = 0
    last[axis] = n - 1
    # mirrored ghost node: a boundary node sees its single face twice
    out[tuple(first)] *= 2.0
    out[tuple(last)] *= 2.0
    return out


def enthalpy_step(h, T, S, h_out, T_out, kbuf, inv_dx2, inv_dy2, inv_dz2,
                  dt_over_rho, k_s, k_l, T_s, T_l, robin, T_inf,
                  T_knots, h_knots, slopes):
    T_knots = np.asarray(T_knots)
    h_knots = np.asarray(h_knots)
    slopes = np.asarray(slopes)
    np.clip((T - T_s) / (T_l - T_s), 0.0, 1.0, out=kbuf)
    kbuf *= k_l - k_s
    kbuf += k_s

    div = _axis_flux(T, kbuf, 0) * inv_dx2
    div += _axis_flux(T, kbuf, 1) * inv_dy2
    div += _axis_flux(T, kbuf, 2) * inv_dz2
    div[:, :, -1] += robin * (T_inf - T[:, :, -1])
    div += S
    np.multiply(div, dt_over_rho, out=h_out)
    h_out += h

    seg = np.searchsorted(h_knots[1:], h_out, side="right")
    T_out[...] = T_knots[seg] + (h_out - h_knots[seg]) / slopes[seg]
