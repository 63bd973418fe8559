"""Compiled vs NumPy kernels: one enthalpy step and the fused GELU pair.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the selection env var is irrelevant.
Each kernel is also checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from lpbf_twin.fno import _act_py
from lpbf_twin.meltpool import _stencil_py
from lpbf_twin.meltpool.solver import SimDomain, LaserState, _Stepper, stable_dt
from lpbf_twin.thermo import EnthalpyCurve, MaterialProps

try:
    from lpbf_twin.fno import _act
    from lpbf_twin.meltpool import _stencil
except ImportError:
    _act = _stencil = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def stencil_case():
    domain = SimDomain(x_range=(0.0, 2000.0), y_range=(-400.0, 400.0), z_range=(600.0, 1000.0),
                       laser_start=400.0, laser_stop=1900.0)
    props = MaterialProps()
    curve = EnthalpyCurve(props)
    st = _Stepper(domain, props, curve)
    st.set_source(LaserState(x=1000.0, V=1.5, P=300.0, alpha=0.3))
    rng = np.random.default_rng(0)
    T = 300.0 + 2000.0 * rng.random(domain.shape)
    h = curve.enthalpy(T)
    dt = stable_dt(domain, props, curve)
    p = props
    args = (st.inv[0], st.inv[1], st.inv[2], dt / p.density, p.k_solid, p.k_liquid,
            p.T_solidus, p.T_liquidus, st.robin, domain.T_ambient, *st.knots)

    def run(mod):
        h_out, T_out = np.empty_like(h), np.empty_like(T)
        mod.enthalpy_step(h, T, st.S, h_out, T_out, st.kbuf, *args)
        return h_out, T_out

    return domain.shape, run


def gelu_case(n=16 * 32 * 101 * 51):
    z = np.random.default_rng(1).standard_normal(n)
    g = np.random.default_rng(2).standard_normal(n)

    def run(mod):
        out, cdf, gz = np.empty_like(z), np.empty_like(z), np.empty_like(z)
        mod.gelu_forward(z, out, cdf)
        mod.gelu_backward(g, z, cdf, gz)
        return out, gz

    return (n,), run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _stencil is None:
        raise SystemExit("compiled extensions are not built; run pip install -e . first")
    print(f"{'kernel':<16}{'size':>14}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}{'max diff':>12}")
    for name, (shape, run), fast, slow in (
        ("enthalpy_step", stencil_case(), _stencil, _stencil_py),
        ("gelu fwd+bwd", gelu_case(), _act, _act_py),
    ):
        diff = max(float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))
                   for a, b in zip(run(fast), run(slow)))
        t_slow = best_of(lambda: run(slow), args.repeat)
        t_fast = best_of(lambda: run(fast), args.repeat)
        size = "x".join(map(str, shape))
        print(f"{name:<16}{size:>14}{1e3 * t_slow:>12.2f}{1e3 * t_fast:>12.2f}"
              f"{t_slow / t_fast:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
