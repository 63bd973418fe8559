import numpy as np
import pytest

from lpbf_twin.meltpool import _stencil_py, kernels
from lpbf_twin.meltpool.io import load_section, load_snapshot, save_section, save_snapshot
from lpbf_twin.meltpool.sections import CHI_XY, CHI_XZ, extract_sections
from lpbf_twin.meltpool.solver import (LaserState, NonConvergenceError, SimDomain,
                                       TemperatureField3D, UnstableTimeStepError, _Stepper,
                                       advance, run_to_steady, stable_dt)
from lpbf_twin.params import ProcessParams
from lpbf_twin.thermo import EnthalpyCurve, MaterialProps

PROPS = MaterialProps()
CURVE = EnthalpyCurve(PROPS)
SMALL = SimDomain(x_range=(0.0, 500.0), y_range=(-100.0, 100.0), z_range=(900.0, 1000.0),
                  spacing=(25.0, 25.0, 25.0), laser_start=100.0, laser_stop=400.0)
# compact domain for full melt-pool runs
POOL = SimDomain(x_range=(0.0, 1400.0), y_range=(-250.0, 250.0), z_range=(750.0, 1000.0),
                 laser_start=300.0, laser_stop=1300.0)


def _hot_field(domain, seed=0):
    rng = np.random.default_rng(seed)
    T = 300.0 + 1500.0 * rng.random(domain.shape)
    return TemperatureField3D(domain, T, CURVE.enthalpy(T))


def _energy(field):
    return float((field.h * field.domain.node_volumes()).sum()) * PROPS.density


def test_domain_validation():
    with pytest.raises(ValueError):
        SimDomain(spacing=(13.0, 12.5, 12.5))
    with pytest.raises(ValueError):
        SimDomain(z_range=(0.0, 900.0))
    with pytest.raises(ValueError):
        SimDomain(laser_start=8500.0)


def test_zero_power_stays_ambient():
    f = run_to_steady(ProcessParams(0.0, 1.0, 350.0, 0.3), SMALL)
    assert np.all(f.T == 350.0) and f.diagnostics["steps"] == 0


def test_envelope_enforced():
    with pytest.raises(ValueError):
        run_to_steady(ProcessParams(700.0, 1.0, 300.0, 0.3), SMALL)


def test_insulated_energy_conserved():
    d = SimDomain(**{**SMALL.to_dict(), "h_conv": 0.0})
    f = _hot_field(d)
    e0 = _energy(f)
    off = LaserState(x=100.0, V=1.0, P=0.0, alpha=0.3)
    dt = stable_dt(d, PROPS, CURVE)
    for _ in range(20):
        f = advance(f, off, dt, PROPS, CURVE)
    assert _energy(f) == pytest.approx(e0, rel=1e-12)


def test_source_energy_balance():
    d = SimDomain(**{**SMALL.to_dict(), "h_conv": 0.0})
    T = np.full(d.shape, 300.0)
    f = TemperatureField3D(d, T, CURVE.enthalpy(T))
    laser = LaserState(x=250.0, V=0.0, P=200.0, alpha=0.3)
    st = _Stepper(d, PROPS, CURVE)
    st.set_source(laser)
    q = float((st.S * d.node_volumes()).sum())
    dt = stable_dt(d, PROPS, CURVE)
    g = advance(f, laser, dt, PROPS, CURVE)
    assert _energy(g) - _energy(f) == pytest.approx(q * dt, rel=1e-9)


def test_surface_loss_cools():
    d = SimDomain(**{**SMALL.to_dict(), "h_conv": 1e4})
    T = np.full(d.shape, 800.0)
    f = TemperatureField3D(d, T, CURVE.enthalpy(T))
    g = advance(f, LaserState(x=100.0, V=1.0, P=0.0), stable_dt(d, PROPS, CURVE), PROPS, CURVE)
    assert _energy(g) < _energy(f)
    assert np.all(g.T[:, :, :-1] == 800.0) and np.all(g.T[:, :, -1] < 800.0)


def test_unstable_step_rejected():
    f = _hot_field(SMALL)
    with pytest.raises(UnstableTimeStepError):
        advance(f, LaserState(x=100.0, V=1.0, P=0.0), 2.0 * stable_dt(SMALL, PROPS, CURVE))


def test_backends_agree():
    f = _hot_field(SMALL, seed=3)
    st = _Stepper(SMALL, PROPS, CURVE)
    st.set_source(LaserState(x=250.0, V=1.0, P=300.0, alpha=0.3))
    dt = stable_dt(SMALL, PROPS, CURVE)
    p = PROPS
    args = (st.inv[0], st.inv[1], st.inv[2], dt / p.density, p.k_solid, p.k_liquid, p.T_solidus,
            p.T_liquidus, st.robin, SMALL.T_ambient, *st.knots)
    outs = []
    for fn in (_stencil_py.enthalpy_step, kernels.enthalpy_step):
        h2, T2 = np.empty_like(f.h), np.empty_like(f.T)
        fn(f.h, f.T, st.S, h2, T2, np.empty(SMALL.shape), *args)
        outs.append((h2, T2))
    assert np.allclose(outs[0][0], outs[1][0], rtol=1e-13, atol=1e-6)
    assert np.allclose(outs[0][1], outs[1][1], rtol=1e-13)


def test_laser_stop_without_steady_state():
    short = SimDomain(**{**POOL.to_dict(), "laser_stop": 350.0})
    with pytest.raises(NonConvergenceError):
        run_to_steady(ProcessParams(300.0, 1.5, 300.0, 0.3), short)


@pytest.fixture(scope="module")
def nominal():
    return run_to_steady(ProcessParams(300.0, 1.5, 300.0, 0.3), POOL)


def test_nominal_pool(nominal):
    d = nominal.diagnostics
    assert PROPS.T_liquidus < d["T_peak"] < 3500.0
    assert d["L"] > d["W"] > 0.0
    assert nominal.T.min() >= 300.0 - 1e-9


def test_more_absorptivity_hotter_pool(nominal):
    f = run_to_steady(ProcessParams(300.0, 1.5, 300.0, 0.45), POOL)
    assert f.diagnostics["T_peak"] > nominal.diagnostics["T_peak"]
    assert f.diagnostics["L"] > nominal.diagnostics["L"]


def test_sections_and_io(nominal, tmp_path):
    xy, xz = extract_sections(nominal)
    assert xy.values.shape == CHI_XY.shape and xz.values.shape == CHI_XZ.shape
    assert xy.values.max() == pytest.approx(nominal.T[:, :, -1].max(), rel=0.05)
    p = save_section(xy, tmp_path / "xy.lpbf", nominal.params)
    back = load_section(p)
    assert np.array_equal(back.values, xy.values) and back.grid == xy.grid
    s = save_snapshot(nominal, tmp_path / "snap.lpbf")
    g = load_snapshot(s)
    assert np.array_equal(g.T, nominal.T) and g.domain == nominal.domain
    assert g.params == nominal.params and g.diagnostics["steps"] == nominal.diagnostics["steps"]


@pytest.mark.slow
def test_grid_convergence():
    # the compact domain's side walls are too close for a halved spacing to be the only change
    wide = SimDomain(x_range=(0.0, 2000.0), y_range=(-400.0, 400.0), z_range=(600.0, 1000.0),
                     laser_start=400.0, laser_stop=1900.0)
    params = ProcessParams(300.0, 1.5, 300.0, 0.3)
    coarse = run_to_steady(params, wide)
    fine = run_to_steady(params, SimDomain(**{**wide.to_dict(), "spacing": (6.25, 6.25, 6.25)}))
    for k in ("L", "W", "T_peak"):
        assert fine.diagnostics[k] == pytest.approx(coarse.diagnostics[k], rel=0.10)
