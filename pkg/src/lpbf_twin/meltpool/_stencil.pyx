# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled explicit enthalpy step for the 3D conduction solver.

Vertex-centred grid, arrays indexed [x, y, z] with z contiguous and the
last z plane being the top (Robin) surface. Zero-flux faces use mirrored
ghost nodes, which doubles the single interior face flux at a boundary
node.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _temperature(double h, const double[::1] T_knots,
                                const double[::1] h_knots,
                                const double[::1] slopes) noexcept nogil:
    cdef int k = 0
    # h_knots[1:] are the segment breaks
    while k < 4 and h >= h_knots[k + 1]:
        k += 1
    return T_knots[k] + (h - h_knots[k]) / slopes[k]


def enthalpy_step(double[:, :, ::1] h, double[:, :, ::1] T, double[:, :, ::1] S,
                  double[:, :, ::1] h_out, double[:, :, ::1] T_out,
                  double[:, :, ::1] kbuf,
                  double inv_dx2, double inv_dy2, double inv_dz2,
                  double dt_over_rho, double k_s, double k_l,
                  double T_s, double T_l, double robin, double T_inf,
                  const double[::1] T_knots, const double[::1] h_knots,
                  const double[::1] slopes):
    cdef Py_ssize_t nx = h.shape[0], ny = h.shape[1], nz = h.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double t, frac, kc, div, fx, fy, fz, hn
    cdef double dk = k_l - k_s, inv_mush = 1.0 / (T_l - T_s)

    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    t = T[i, j, k]
                    frac = (t - T_s) * inv_mush
                    if frac < 0.0:
                        frac = 0.0
                    elif frac > 1.0:
                        frac = 1.0
                    kbuf[i, j, k] = k_s + dk * frac

        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    t = T[i, j, k]
                    kc = kbuf[i, j, k]

                    if nx == 1:
                        fx = 0.0
                    elif i == 0:
                        fx = 2.0 * 0.5 * (kc + kbuf[1, j, k]) * (T[1, j, k] - t)
                    elif i == nx - 1:
                        fx = 2.0 * 0.5 * (kc + kbuf[i - 1, j, k]) * (T[i - 1, j, k] - t)
                    else:
                        fx = (0.5 * (kc + kbuf[i + 1, j, k]) * (T[i + 1, j, k] - t)
                              + 0.5 * (kc + kbuf[i - 1, j, k]) * (T[i - 1, j, k] - t))

                    if ny == 1:
                        fy = 0.0
                    elif j == 0:
                        fy = 2.0 * 0.5 * (kc + kbuf[i, 1, k]) * (T[i, 1, k] - t)
                    elif j == ny - 1:
                        fy = 2.0 * 0.5 * (kc + kbuf[i, j - 1, k]) * (T[i, j - 1, k] - t)
                    else:
                        fy = (0.5 * (kc + kbuf[i, j + 1, k]) * (T[i, j + 1, k] - t)
                              + 0.5 * (kc + kbuf[i, j - 1, k]) * (T[i, j - 1, k] - t))

                    if nz == 1:
                        fz = 0.0
                    elif k == 0:
                        fz = 2.0 * 0.5 * (kc + kbuf[i, j, 1]) * (T[i, j, 1] - t)
                    elif k == nz - 1:
                        fz = 2.0 * 0.5 * (kc + kbuf[i, j, k - 1]) * (T[i, j, k - 1] - t)
                    else:
                        fz = (0.5 * (kc + kbuf[i, j, k + 1]) * (T[i, j, k + 1] - t)
                              + 0.5 * (kc + kbuf[i, j, k - 1]) * (T[i, j, k - 1] - t))

                    div = fx * inv_dx2 + fy * inv_dy2 + fz * inv_dz2
                    if k == nz - 1:
                        div = div + robin * (T_inf - t)
                    hn = h[i, j, k] + dt_over_rho * (div + S[i, j, k])
                    h_out[i, j, k] = hn
                    T_out[i, j, k] = _temperature(hn, T_knots, h_knots, slopes)
