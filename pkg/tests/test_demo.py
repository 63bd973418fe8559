import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpbf_twin.control import ControlConfig
from lpbf_twin.demo import DemoConfig, run_demo, substrate_update, write_outputs
from stubs import LinearPair

CFG = DemoConfig()


def test_step_count():
    assert CFG.steps == 100
    assert DemoConfig(height=3100.0).steps == 11


def test_idle_substrate_stays_ambient():
    assert substrate_update(300.0, 0.0, 1.5, 0.0, CFG, 0.3) == 300.0


@settings(max_examples=100, deadline=None)
@given(st.floats(300.0, 800.0), st.floats(0.0, 29000.0))
def test_idle_substrate_relaxes(T, h):
    T2 = substrate_update(T, 0.0, 1.5, h, CFG, 0.3)
    assert 300.0 <= T2 <= T


@settings(max_examples=100, deadline=None)
@given(st.floats(100.0, 450.0), st.floats(1.0, 50.0), st.floats(0.0, 29000.0))
def test_more_power_heats_more(P, dP, h):
    assert substrate_update(400.0, P + dP, 1.5, h, CFG, 0.3) > substrate_update(400.0, P, 1.5, h, CFG, 0.3)


def test_config_validation():
    with pytest.raises(ValueError):
        DemoConfig(layers_per_step=0)
    with pytest.raises(ValueError):
        DemoConfig(hatch=0.0)


def test_stub_demo(tmp_path):
    cfg = DemoConfig(height=3000.0, control_config=ControlConfig(max_iter=5))
    traces, summary = run_demo(cfg, LinearPair(), (False, True))
    assert [t.controlled for t in traces] == [False, True]
    assert summary["controlled"] == [True, False] and summary["steps"] == 10
    assert traces[0].column("P_W").tolist() == [cfg.P0] * 10
    assert traces[1].rows[0]["T_sub_K"] == 300.0
    paths = write_outputs(traces, summary, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["comparison.json", "trace_controlled.csv", "trace_uncontrolled.csv"]
    assert json.loads((tmp_path / "comparison.json").read_text())["steps"] == 10
    header = (tmp_path / "trace_controlled.csv").read_text().splitlines()[0]
    assert header == "step,T_sub_K,P_W,V_m_s,T_peak_K,Ra_um,flags"


def test_stub_demo_with_uq(tmp_path):
    cfg = DemoConfig(height=600.0, uq_samples=20, control=False)
    traces, _ = run_demo(cfg, LinearPair(), (False,))
    traces[0].write(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0].endswith("Ra_p5,Ra_p95")


def test_fixed_parameters_heat_the_part():
    # direct iteration of the recurrence at the nominal (P, V)
    T = [300.0]
    for k in range(CFG.steps):
        h = k * CFG.layers_per_step * CFG.layer_thickness
        T.append(substrate_update(T[-1], CFG.P0, CFG.V0, h, CFG, 0.3))
    assert all(b >= a for a, b in zip(T, T[1:]))
    assert 400.0 <= T[-1] <= 550.0
