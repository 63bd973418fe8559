"""Absorptivity calibration by matching melt-pool length statistics, and UQ propagation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .features import _TS, Smoothing, SriConstants
from .optim import Adam
from .pair import feature_slopes

ALPHA_CLAMP = (0.02, 0.95)
MAX_EXCLUDED = 0.20
M_TO_UM = 1e6


class CalibrationError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ColdPoolError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianSpec:
    """Normal distribution stored as (mean, log std); ``log_sigma=-inf`` is a point mass."""

    mu: float
    log_sigma: float
    unit: str = ""

    @classmethod
    def from_sigma(cls, mu: float, sigma: float, unit: str = "") -> "GaussianSpec":
        if sigma < 0:
            raise ValueError("standard deviation must be non-negative")
        return cls(float(mu), math.log(sigma) if sigma > 0 else -math.inf, unit)

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "unit": self.unit}


def kl_gaussian(p: GaussianSpec | tuple, q: GaussianSpec | tuple, variant: str = "standard",
                grad: bool = False):
    """KL(p || q) for normals given as specs or (mu, sigma) pairs.

    ``variant="unnormalized"`` is the expression that omits the
    ``1/(2 sigma_q^2)`` factor and the constant. With ``grad=True`` also
    returns d/d(mu_p, sigma_p).
    """
    mp, sp = (p.mu, p.sigma) if isinstance(p, GaussianSpec) else p
    mq, sq = (q.mu, q.sigma) if isinstance(q, GaussianSpec) else q
    if not (sp > 0 and sq > 0):
        raise ValueError("KL divergence needs positive standard deviations")
    d = mp - mq
    if variant == "standard":
        val = math.log(sq / sp) + (sp * sp + d * d) / (2.0 * sq * sq) - 0.5
        g = (d / (sq * sq), -1.0 / sp + sp / (sq * sq))
    elif variant == "unnormalized":
        val = math.log(sq / sp) + (sp * sp - sq * sq + d * d) / 2.0
        g = (d, -1.0 / sp + sp)
    else:
        raise ValueError(f"unknown KL variant {variant!r}")
    return (val, g) if grad else val


def sample_alpha(spec: GaussianSpec, S: int, seed: int = 0, eps: np.ndarray | None = None):
    """Reparameterized draws ``mu + sigma * eps`` clamped to physical bounds.

    Returns ``(alpha, eps, clamped)``; the same seed always gives the same eps.
    """
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal(S)
    raw = spec.mu + spec.sigma * eps
    alpha = np.clip(raw, *ALPHA_CLAMP)
    return alpha, eps, (raw < ALPHA_CLAMP[0]) | (raw > ALPHA_CLAMP[1])


def _xi(alpha, P, V, T_sub):
    alpha = np.asarray(alpha, dtype=float)
    return np.column_stack([np.full(alpha.size, P), np.full(alpha.size, V),
                            np.full(alpha.size, T_sub), alpha])


class LengthCurve:
    """Smooth pool length and peak temperature as functions of alpha alone.

    With (P, V, T_sub) fixed the surrogate is a 1-D map of alpha, so it is
    tabulated once on ``nodes`` points across the clamp range (values and
    exact slopes from one batched forward/backward) and evaluated through
    cubic Hermite interpolation afterwards.
    """

    def __init__(self, pair, P, V, T_sub, smoothing: Smoothing = Smoothing(tau_T=25.0),
                 T_s: float = _TS, nodes: int = 129):
        if nodes < 2:
            raise ValueError("need at least two nodes")
        a = np.linspace(*ALPHA_CLAMP, nodes)
        feats, slopes = feature_slopes(pair, _xi(a, P, V, T_sub), smoothing, T_s, ("T_peak", "L"))
        dL = slopes["L"][:, 3]
        dT = slopes["T_peak"][:, 3]
        self.alpha = a
        self.T_s = T_s
        self._L = CubicHermiteSpline(a, np.asarray(feats["L"]) * M_TO_UM, dL * M_TO_UM)
        self._T = CubicHermiteSpline(a, np.asarray(feats["T_peak"]), dT)

    def length(self, alpha):
        """Length (um) and d length / d alpha."""
        return self._L(alpha), self._L(alpha, 1)

    def peak(self, alpha):
        return self._T(alpha)


@dataclass
class LengthStats:
    mean: float  # um
    std: float  # um
    excluded: int
    d_mean: np.ndarray | None = None  # per-sample d/d alpha
    d_std: np.ndarray | None = None


def length_stats(alpha, P, V, T_sub, pair, smoothing: Smoothing = Smoothing(tau_T=25.0),
                 T_s: float = _TS, want_grad: bool = False,
                 curve: LengthCurve | None = None) -> LengthStats:
    """Mean and population std (um) of the smooth pool length over alpha samples.

    Samples whose smooth peak temperature does not exceed the solidus are
    excluded and counted; more than 20% excluded is an error. With ``curve``
    the surrogate is read through the tabulated alpha map instead of being
    run per sample.
    """
    alpha = np.asarray(alpha, dtype=float)
    if curve is not None:
        L, dL = curve.length(alpha)
        keep = curve.peak(alpha) > curve.T_s
    else:
        feats, slopes = feature_slopes(pair, _xi(alpha, P, V, T_sub), smoothing, T_s,
                                       ("L",) if want_grad else ())
        L = feats["L"] * M_TO_UM
        keep = np.asarray(feats["T_peak"]) > T_s
    n_out = int((~keep).sum())
    if n_out > MAX_EXCLUDED * alpha.size:
        raise ColdPoolError(f"{n_out} of {alpha.size} samples have no molten pool")
    Lk = L[keep]
    S = Lk.size
    mu = float(Lk.mean())
    sd = float(np.sqrt(np.mean((Lk - mu) ** 2)))
    if not want_grad:
        return LengthStats(mu, sd, n_out)
    gmu = np.where(keep, 1.0 / S, 0.0)
    gsd = np.where(keep, (L - mu) / (S * sd), 0.0) if sd > 0 else np.zeros_like(L)
    if curve is None:
        dL = slopes["L"][:, 3] * M_TO_UM
    return LengthStats(mu, sd, n_out, gmu * dL, gsd * dL)


@dataclass(frozen=True)
class CalibConfig:
    P: float
    V: float
    T_sub: float
    samples: int = 100
    epochs: int = 60
    lr: float = 0.05
    seed: int = 0
    variant: str = "standard"
    smoothing: Smoothing = Smoothing(tau_T=25.0)
    method: str = "curve"  # or "direct": run the surrogate on every sample
    curve_nodes: int = 129

    def __post_init__(self):
        if self.method not in ("curve", "direct"):
            raise ValueError(f"unknown length evaluation method {self.method!r}")
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if self.variant not in ("standard", "unnormalized"):
            raise ValueError(f"unknown KL variant {self.variant!r}")


@dataclass
class CalibResult:
    spec: GaussianSpec
    kl: float
    trace: list = field(default_factory=list)
    excluded: int = 0
    clamped: int = 0

    TRACE_FIELDS = ("epoch", "mu_alpha", "sigma_alpha", "kl", "mu_L_um", "sigma_L_um")

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.TRACE_FIELDS)
            for row in self.trace:
                w.writerow([row[k] for k in self.TRACE_FIELDS])


def calibration_loss(spec: GaussianSpec, eps, target: GaussianSpec, config: CalibConfig, pair,
                     T_s: float = _TS, curve: LengthCurve | None = None):
    """KL(predicted length stats || target) and its gradient w.r.t. (mu, log sigma)."""
    alpha, _, clamped = sample_alpha(spec, eps.size, eps=eps)
    st = length_stats(alpha, config.P, config.V, config.T_sub, pair, config.smoothing, T_s,
                      want_grad=True, curve=curve)
    if not st.std > 0:
        raise CalibrationError("predicted length spread collapsed to zero")
    kl, (g_mu, g_sd) = kl_gaussian((st.mean, st.std), target, config.variant, grad=True)
    g_alpha = g_mu * st.d_mean + g_sd * st.d_std
    g_alpha = np.where(clamped, 0.0, g_alpha)
    grad = np.array([g_alpha.sum(), float(np.sum(g_alpha * spec.sigma * eps))])
    return kl, grad, st, int(clamped.sum())


def calibrate_absorptivity(target: GaussianSpec, config: CalibConfig, pair,
                           init: GaussianSpec = GaussianSpec.from_sigma(0.3, 0.05),
                           T_s: float = _TS) -> CalibResult:
    """Adam on (mu_alpha, log sigma_alpha); one frozen noise draw for all epochs.

    Returns the lowest-KL iterate. Raises :class:`CalibrationError` on a
    non-finite KL or when the final KL exceeds ten times the initial one.
    """
    if not target.sigma > 0:
        raise ValueError("target standard deviation must be positive")
    eps = np.random.default_rng(config.seed).standard_normal(config.samples)
    curve = None
    if config.method == "curve":
        curve = LengthCurve(pair, config.P, config.V, config.T_sub, config.smoothing, T_s,
                            config.curve_nodes)
    theta = {"t": np.array([init.mu, init.log_sigma])}
    opt = Adam(theta, lr=config.lr)
    trace, best = [], None
    first = None
    for epoch in range(config.epochs + 1):
        spec = GaussianSpec(float(theta["t"][0]), float(theta["t"][1]), "")
        kl, grad, st, n_clamped = calibration_loss(spec, eps, target, config, pair, T_s, curve)
        trace.append({"epoch": epoch, "mu_alpha": spec.mu, "sigma_alpha": spec.sigma, "kl": kl,
                      "mu_L_um": st.mean, "sigma_L_um": st.std})
        if not (math.isfinite(kl) and np.all(np.isfinite(grad))):
            raise CalibrationError(f"non-finite KL at epoch {epoch}", trace)
        first = kl if first is None else first
        if best is None or kl < best[1]:
            best = (spec, kl, st.excluded, n_clamped)
        if epoch == config.epochs:
            break
        opt.step({"t": grad})
    if kl > 10.0 * first and kl > 1e-12:
        raise CalibrationError(f"KL grew from {first:.3g} to {kl:.3g}", trace)
    return CalibResult(best[0], best[1], trace, best[2], best[3])


def synthetic_length_observations(truth: GaussianSpec, n: int, seed: int = 0):
    """Stand-in for segmented melt-pool lengths: n normal draws and their fitted spec."""
    if n < 2:
        raise ValueError("need at least two observations")
    x = truth.mu + truth.sigma * np.random.default_rng(seed).standard_normal(n)
    sd = float(x.std(ddof=1))
    return x, GaussianSpec.from_sigma(float(x.mean()), sd, truth.unit)


def fit_length_samples(values, unit: str = "um") -> GaussianSpec:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    return GaussianSpec.from_sigma(float(x.mean()), float(x.std(ddof=1)), unit)


QUANTITIES = ("T_peak", "L", "W", "Ra")


def summarize(values: np.ndarray, bins: int = 20) -> dict:
    v = np.asarray(values, dtype=float)
    counts, edges = np.histogram(v, bins=bins)
    p5, p50, p95 = np.percentile(v, [5, 50, 95])
    return {"mean": float(v.mean()), "std": float(v.std()), "p5": float(p5), "p50": float(p50),
            "p95": float(p95), "hist_edges": edges.tolist(), "hist_counts": counts.tolist()}


def propagate_uq(spec: GaussianSpec, P, V, T_sub, pair, samples: int = 100, seed: int = 0,
                 constants: SriConstants = SriConstants(), bins: int = 20, T_s: float = _TS):
    """Monte-Carlo hard-variant T_peak, L (um), W (um) and Ra (um) under alpha ~ spec."""
    alpha, _, clamped = sample_alpha(spec, samples, seed)
    h = pair.hard_features(_xi(alpha, P, V, T_sub), constants, T_s)
    cold = np.asarray(h["cold"], dtype=bool)
    if cold.sum() > MAX_EXCLUDED * samples:
        raise ColdPoolError(f"{int(cold.sum())} of {samples} samples have no molten pool")
    keep = ~cold
    vals = {"T_peak": h["T_peak"][keep], "L": h["L"][keep] * M_TO_UM,
            "W": h["W"][keep] * M_TO_UM, "Ra": h["Ra"][keep]}
    out = {k: summarize(vals[k], bins) for k in QUANTITIES}
    out["meta"] = {"samples": samples, "excluded": int(cold.sum()), "alpha_clamped": int(clamped.sum()),
                   "alpha": spec.to_dict(), "P": P, "V": V, "T_sub": T_sub}
    return out


def write_histograms(summary: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "bin_lo", "bin_hi", "count"])
        for q in QUANTITIES:
            e, c = summary[q]["hist_edges"], summary[q]["hist_counts"]
            for i, n in enumerate(c):
                w.writerow([q, e[i], e[i + 1], n])
