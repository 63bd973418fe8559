"""Transient 3D conduction with a moving Gaussian volumetric source.

Explicit enthalpy time stepping on a uniform vertex-centred grid. Lengths
at the API are micrometres; the kernel works in SI units. The top face
(largest z) carries a convective Robin condition, every other face is
insulated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..params import SOLVER_ENVELOPE, ProcessParams
from ..thermo import EnthalpyCurve, MaterialProps
from . import kernels

log = logging.getLogger(__name__)

UM = 1e-6
TOP_Z = 1000.0


class UnstableTimeStepError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SimDomain:
    x_range: tuple = (0.0, 10000.0)
    y_range: tuple = (-1000.0, 1000.0)
    z_range: tuple = (0.0, 1000.0)
    spacing: tuple = (12.5, 12.5, 12.5)
    layer_thickness: float = 30.0
    laser_radius: float = 50.0
    h_conv: float = 1.0  # W/(m^2 K)
    T_ambient: float = 300.0
    laser_start: float = 2000.0
    laser_stop: float = 8000.0
    cfl_safety: float = 0.8

    def __post_init__(self):
        for rng, d, name in zip((self.x_range, self.y_range, self.z_range),
                                self.spacing, "xyz"):
            n = (rng[1] - rng[0]) / d
            if d <= 0 or rng[1] <= rng[0] or abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ValueError(f"spacing {d} does not divide {name} extent {rng}")
        if self.z_range[1] != TOP_Z:
            raise ValueError("top surface must be z = 1000 um")
        y0 = -self.y_range[0] / self.spacing[1]
        if abs(y0 - round(y0)) > 1e-9 or not self.y_range[0] <= 0 <= self.y_range[1]:
            raise ValueError("y = 0 must be a grid plane")
        s = (self.laser_start - self.x_range[0]) / self.spacing[0]
        if abs(s - round(s)) > 1e-9:
            raise ValueError("laser_start must be a grid node")
        if not self.x_range[0] <= self.laser_start < self.laser_stop <= self.x_range[1]:
            raise ValueError("laser path must lie inside the domain")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(round((r[1] - r[0]) / d)) + 1
                     for r, d in zip((self.x_range, self.y_range, self.z_range), self.spacing))

    def axes(self):
        return tuple(r[0] + d * np.arange(n) for r, d, n in
                     zip((self.x_range, self.y_range, self.z_range), self.spacing, self.shape))

    def index_of_y0(self) -> int:
        return int(round(-self.y_range[0] / self.spacing[1]))

    def node_volumes(self) -> np.ndarray:
        """Control volume per node (m^3); halved once per boundary axis."""
        ws = []
        for n, d in zip(self.shape, self.spacing):
            w = np.full(n, d * UM)
            if n > 1:
                w[0] *= 0.5
                w[-1] *= 0.5
            ws.append(w)
        return ws[0][:, None, None] * ws[1][None, :, None] * ws[2][None, None, :]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimDomain":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class LaserState:
    x: float  # um
    y: float = 0.0
    z: float = TOP_Z
    V: float = 1.0  # m/s
    P: float = 0.0  # W
    alpha: float = 0.3

    def moved(self, dx_um: float) -> "LaserState":
        return replace(self, x=self.x + dx_um)


@dataclass
class TemperatureField3D:
    domain: SimDomain
    T: np.ndarray
    h: np.ndarray
    laser: LaserState | None = None
    params: ProcessParams | None = None
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def uniform(cls, domain: SimDomain, T0: float, curve: EnthalpyCurve, **kw):
        T = np.full(domain.shape, float(T0))
        return cls(domain, T, np.full(domain.shape, curve.enthalpy(float(T0))), **kw)

    def total_enthalpy(self, props: MaterialProps) -> float:
        """Sum of rho*h*dV in joules."""
        return float(np.sum(props.density * self.h * self.domain.node_volumes()))


def source_term(x, y, z, laser: LaserState, domain: SimDomain):
    """Absorbed laser power density in W/m^3 at node positions given in um.

    Active only in the powder layer band z >= top - layer_thickness.
    """
    x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
    rb = domain.laser_radius * UM
    th = domain.layer_thickness * UM
    r2 = ((x - laser.x) ** 2 + (y - laser.y) ** 2 + (z - laser.z) ** 2) * UM ** 2
    peak = laser.alpha * laser.P / (math.pi * rb ** 2 * th)
    s = peak * np.exp(-2.0 * r2 / rb ** 2)
    s = np.where(z >= TOP_Z - domain.layer_thickness - 1e-9, s, 0.0)
    return s if s.ndim else float(s)


def stable_dt(domain: SimDomain, props: MaterialProps, curve: EnthalpyCurve) -> float:
    """Largest explicit step allowed by the 0.8-safety diffusion limit."""
    dmin = min(domain.spacing) * UM
    k_max = max(props.k_solid, props.k_liquid)
    return domain.cfl_safety * dmin ** 2 * props.density * curve.min_heat_capacity() / (6.0 * k_max)


class _Stepper:
    """Owns the work buffers for repeated in-place steps."""

    def __init__(self, domain: SimDomain, props: MaterialProps, curve: EnthalpyCurve):
        self.domain, self.props, self.curve = domain, props, curve
        dx, dy, dz = (d * UM for d in domain.spacing)
        self.inv = (1.0 / dx ** 2, 1.0 / dy ** 2, 1.0 / dz ** 2)
        self.robin = 2.0 * domain.h_conv / dz
        self.kbuf = np.empty(domain.shape)
        self.S = np.zeros(domain.shape)
        self.x, self.y, self.z = domain.axes()
        self._box = None
        self.knots = (np.ascontiguousarray(curve.T_knots), np.ascontiguousarray(curve.h_knots),
                      np.ascontiguousarray(curve.slopes))

    def set_source(self, laser: LaserState):
        if self._box is not None:
            self.S[self._box] = 0.0
            self._box = None
        if laser.P == 0.0 or laser.alpha == 0.0:
            return
        d = self.domain
        reach = 4.0 * d.laser_radius
        ix = np.nonzero(np.abs(self.x - laser.x) <= reach)[0]
        iy = np.nonzero(np.abs(self.y - laser.y) <= reach)[0]
        iz = np.nonzero(self.z >= TOP_Z - d.layer_thickness - 1e-9)[0]
        if ix.size == 0 or iy.size == 0 or iz.size == 0:
            return
        box = (slice(ix[0], ix[-1] + 1), slice(iy[0], iy[-1] + 1), slice(iz[0], iz[-1] + 1))
        X, Y, Z = np.meshgrid(self.x[box[0]], self.y[box[1]], self.z[box[2]], indexing="ij")
        self.S[box] = source_term(X, Y, Z, laser, d)
        self._box = box

    def step(self, h, T, h_out, T_out, dt):
        p = self.props
        kernels.enthalpy_step(h, T, self.S, h_out, T_out, self.kbuf,
                              self.inv[0], self.inv[1], self.inv[2], dt / p.density,
                              p.k_solid, p.k_liquid, p.T_solidus, p.T_liquidus,
                              self.robin, self.domain.T_ambient, *self.knots)


def _check_dt(dt, domain, props, curve):
    limit = 0.8 * (min(domain.spacing) * UM) ** 2 * props.density * curve.min_heat_capacity() / (
        6.0 * max(props.k_solid, props.k_liquid))
    if not 0 < dt <= limit * (1 + 1e-12):
        raise UnstableTimeStepError(
            f"dt={dt:.3e} s exceeds explicit stability limit {limit:.3e} s "
            f"(0.8 * dmin^2 * rho * c_min / (6 k_max))")


def advance(field: TemperatureField3D, laser: LaserState, dt: float,
            props: MaterialProps | None = None, curve: EnthalpyCurve | None = None
            ) -> TemperatureField3D:
    """One explicit step; returns a new field, leaving ``field`` untouched."""
    props = props or MaterialProps()
    curve = curve or EnthalpyCurve(props)
    _check_dt(dt, field.domain, props, curve)
    st = _Stepper(field.domain, props, curve)
    st.set_source(laser)
    h_out = np.empty_like(field.h)
    T_out = np.empty_like(field.T)
    st.step(np.ascontiguousarray(field.h), np.ascontiguousarray(field.T), h_out, T_out, dt)
    return TemperatureField3D(field.domain, T_out, h_out, laser.moved(laser.V * dt / UM),
                              field.params, dict(field.diagnostics))


def _row_extent(values, coords, threshold):
    """Longest molten chord per row (last axis), with linear crossing interpolation."""
    hot = values > threshold
    any_hot = hot.any(axis=-1)
    out = np.zeros(values.shape[:-1])
    if not any_hot.any():
        return out
    n = values.shape[-1]
    first = np.argmax(hot, axis=-1)
    last = n - 1 - np.argmax(hot[..., ::-1], axis=-1)
    d = coords[1] - coords[0]
    rows = np.nonzero(any_hot)[0]
    for r in rows:
        i0, i1 = first[r], last[r]
        v = values[r]
        left = coords[i0]
        if i0 > 0:
            left -= d * (v[i0] - threshold) / (v[i0] - v[i0 - 1])
        right = coords[i1]
        if i1 < n - 1:
            right += d * (v[i1] - threshold) / (v[i1] - v[i1 + 1])
        out[r] = right - left
    return out


def pool_metrics(field: TemperatureField3D, props: MaterialProps) -> dict:
    """Length, width (um) and peak temperature read directly off the solver grid."""
    x, y, z = field.domain.axes()
    top = field.T[:, :, -1]
    centre = field.T[:, field.domain.index_of_y0(), :]
    L_top = _row_extent(top.T, x, props.T_solidus)
    L_c = _row_extent(centre.T, x, props.T_solidus)
    W = _row_extent(top, y, props.T_solidus)
    return {"L": float(max(L_top.max(initial=0.0), L_c.max(initial=0.0))),
            "W": float(W.max(initial=0.0)), "T_peak": float(field.T.max())}


def _rel_spread(values):
    v = np.asarray(values)
    scale = abs(v[-1])
    spread = v.max() - v.min()
    if spread == 0.0:
        return 0.0
    return spread / scale if scale > 0 else math.inf


def run_to_steady(params: ProcessParams, domain: SimDomain | None = None,
                  props: MaterialProps | None = None, curve: EnthalpyCurve | None = None,
                  window: int = 100, rtol: float = 1e-3, check_envelope: bool = True,
                  min_travel: float = 0.0) -> TemperatureField3D:
    """March the scan from ``laser_start`` until the pool is quasi-steady.

    The time step is shrunk so the laser advances exactly one grid cell
    every ``m`` steps; pool metrics are sampled at those node-aligned
    instants, which removes sub-cell sampling jitter from the convergence
    test. Raises :class:`NonConvergenceError` when the laser reaches
    ``domain.laser_stop`` first. ``min_travel`` (um) delays the test until
    the wake behind the pool has had room to form.
    """
    domain = domain or SimDomain()
    props = props or MaterialProps()
    curve = curve or EnthalpyCurve(props)
    if check_envelope:
        bad = [n for n in params.outside(SOLVER_ENVELOPE) if not (n == "P" and params.P == 0.0)]
        if bad:
            raise ValueError(f"parameters outside solver envelope: {bad}")

    laser = LaserState(x=domain.laser_start, V=params.V, P=params.P, alpha=params.alpha)
    field = TemperatureField3D.uniform(domain, params.T_sub, curve, laser=laser, params=params)
    if params.P == 0.0 or params.alpha == 0.0:
        field.diagnostics = {"steps": 0, "converged": True, "L": 0.0, "W": 0.0,
                             "T_peak": float(params.T_sub), "backend": kernels.BACKEND}
        return field

    dx_um = domain.spacing[0]
    dt_max = stable_dt(domain, props, curve)
    m = max(1, math.ceil(dx_um * UM / (params.V * dt_max)))
    dt = dx_um * UM / (params.V * m)
    span = m * math.ceil(window / m)

    st = _Stepper(domain, props, curve)
    h, T = field.h, field.T
    h2, T2 = np.empty_like(h), np.empty_like(T)
    history = []
    n = 0
    cells = 0
    while True:
        x_l = domain.laser_start + cells * dx_um + (n % m) * dx_um / m
        if n % m == 0:
            snap = TemperatureField3D(domain, T, h, replace(laser, x=x_l), params)
            met = pool_metrics(snap, props)
            history.append((n, met["L"], met["W"], met["T_peak"]))
            if n >= span and x_l - domain.laser_start >= min_travel:
                recent = [hh for hh in history if hh[0] >= n - span]
                spreads = [_rel_spread([hh[i] for hh in recent]) for i in (1, 2, 3)]
                if max(spreads) < rtol:
                    break
            if x_l >= domain.laser_stop:
                raise NonConvergenceError(
                    f"no quasi-steady pool before x={domain.laser_stop} um",
                    {"steps": n, "history": history[-10:], "dt": dt})
        laser_now = replace(laser, x=x_l)
        st.set_source(laser_now)
        st.step(h, T, h2, T2, dt)
        h, h2 = h2, h
        T, T2 = T2, T
        n += 1
        if n % m == 0:
            cells += 1

    field = TemperatureField3D(domain, T, h, replace(laser, x=x_l), params)
    field.diagnostics = {
        "steps": n, "converged": True, "dt": dt, "substeps_per_cell": m,
        "laser_x": x_l, "L": met["L"], "W": met["W"], "T_peak": met["T_peak"],
        "spreads": spreads, "backend": kernels.BACKEND,
    }
    log.info("steady after %d steps (laser at %.1f um): %s", n, x_l, met)
    return field
