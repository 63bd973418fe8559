"""Material properties and the enthalpy-temperature map for AlSi10Mg.

The enthalpy curve is piecewise linear in temperature with five segments:
solid, mushy zone (melting ramp), liquid, vaporization ramp and vapour.
Every segment has a positive slope so the map is a bijection and the
solver can recover temperature from enthalpy exactly.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MaterialProps:
    density: float = 2670.0  # kg/m^3
    cp_solid: float = 546.0  # J/(kg K)
    cp_liquid: float = 632.0  # J/(kg K)
    latent_melt: float = 4.23e5  # J/kg
    latent_vapor: float = 1.14e7  # J/kg
    k_solid: float = 113.0  # W/(m K)
    k_liquid: float = 133.0  # W/(m K)
    T_solidus: float = 831.0  # K
    T_liquidus: float = 867.0  # K
    T_boiling: float = 2740.0  # K
    absorptivity: float = 0.3

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("latent_melt", "latent_vapor"):
                if getattr(self, f.name) < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if not self.T_solidus < self.T_liquidus < self.T_boiling:
            raise ValueError("require T_solidus < T_liquidus < T_boiling")

    def constant_property_variant(self) -> "MaterialProps":
        """Same solid properties everywhere and no latent heat (conduction-only checks)."""
        return replace(
            self,
            cp_liquid=self.cp_solid,
            k_liquid=self.k_solid,
            latent_melt=0.0,
            latent_vapor=0.0,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def load_material(path: str | Path, section: str = "material") -> MaterialProps:
    """Read a ``key = value`` INI file; missing keys fall back to the defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    if not parser.has_section(section):
        return MaterialProps()
    known = {f.name for f in fields(MaterialProps)}
    values = {}
    for key, raw in parser.items(section):
        if key not in known:
            raise KeyError(f"unknown material key {key!r} in {path}")
        values[key] = float(raw)
    return MaterialProps(**values)


class EnthalpyCurve:
    """Piecewise-linear specific enthalpy h(T) with h(T_ref) = 0.

    The vaporization jump is spread over ``vapor_width`` kelvin centred on
    the boiling point.
    """

    def __init__(self, props: MaterialProps | None = None, T_ref: float = 300.0,
                 vapor_width: float = 50.0):
        self.props = props = props if props is not None else MaterialProps()
        if vapor_width <= 0:
            raise ValueError("vapor_width must be positive")
        if props.T_boiling - vapor_width / 2 <= props.T_liquidus:
            raise ValueError("vaporization ramp overlaps the liquidus")
        if T_ref > props.T_solidus:
            raise ValueError("T_ref must lie in the solid range")
        self.T_ref = float(T_ref)
        self.vapor_width = float(vapor_width)

        c_avg = 0.5 * (props.cp_solid + props.cp_liquid)
        Ts, Tl = props.T_solidus, props.T_liquidus
        Tv1 = props.T_boiling - vapor_width / 2
        Tv2 = props.T_boiling + vapor_width / 2
        slopes = [
            props.cp_solid,
            (props.latent_melt + c_avg * (Tl - Ts)) / (Tl - Ts),
            props.cp_liquid,
            (props.latent_vapor + props.cp_liquid * vapor_width) / vapor_width,
            props.cp_liquid,
        ]
        # segment k covers [T_knots[k], T_knots[k+1]); first and last extend to infinity
        T_knots = [self.T_ref, Ts, Tl, Tv1, Tv2]
        h_knots = [0.0, props.cp_solid * (Ts - self.T_ref)]
        h_knots.append(h_knots[1] + props.latent_melt + c_avg * (Tl - Ts))
        h_knots.append(h_knots[2] + props.cp_liquid * (Tv1 - Tl))
        h_knots.append(h_knots[3] + props.latent_vapor + props.cp_liquid * vapor_width)
        # anchor the solid segment at T_ref rather than T_s so h(T_ref) == 0 exactly
        self.T_knots = np.array(T_knots)
        self.h_knots = np.array(h_knots)
        self.slopes = np.array(slopes)
        self.T_breaks = np.array([Ts, Tl, Tv1, Tv2])
        self.h_breaks = self.h_knots[1:].copy()

    def enthalpy(self, T):
        """Specific enthalpy in J/kg. Raises ``ValueError`` for negative T."""
        T = np.asarray(T, dtype=float)
        if np.any(T < 0):
            raise ValueError("temperature must be non-negative (kelvin)")
        k = np.searchsorted(self.T_breaks, T, side="right")
        h = self.h_knots[k] + self.slopes[k] * (T - self.T_knots[k])
        return h if h.ndim else float(h)

    def temperature(self, h):
        """Exact inverse of :meth:`enthalpy`."""
        h = np.asarray(h, dtype=float)
        k = np.searchsorted(self.h_breaks, h, side="right")
        T = self.T_knots[k] + (h - self.h_knots[k]) / self.slopes[k]
        return T if T.ndim else float(T)

    def min_heat_capacity(self) -> float:
        return float(self.slopes.min())


def enthalpy_of_temperature(T, curve: EnthalpyCurve | None = None):
    return (curve or _default_curve()).enthalpy(T)


def temperature_of_enthalpy(h, curve: EnthalpyCurve | None = None):
    return (curve or _default_curve()).temperature(h)


def conductivity_of_temperature(T, props: MaterialProps | None = None):
    """k_s below solidus, k_l above liquidus, linear blend across the mushy zone."""
    p = props or MaterialProps()
    T = np.asarray(T, dtype=float)
    frac = np.clip((T - p.T_solidus) / (p.T_liquidus - p.T_solidus), 0.0, 1.0)
    k = p.k_solid + (p.k_liquid - p.k_solid) * frac
    return k if k.ndim else float(k)


_DEFAULT_CURVE = None


def _default_curve() -> EnthalpyCurve:
    global _DEFAULT_CURVE
    if _DEFAULT_CURVE is None:
        _DEFAULT_CURVE = EnthalpyCurve()
    return _DEFAULT_CURVE
