"""2D Fourier neural operator with an explicit reverse-mode pass.

Tensors are channels-first: ``(batch, channels, n0, n1)``. The spectral
block keeps ``modes`` frequencies per axis: along the full-complex axis 0
the lowest non-negative and negative frequencies, along the half-spectrum
axis 1 the first ``modes`` bins. Coefficients are normalized like
``rfft2(..., norm="forward")`` so the operator does not depend on the grid
resolution. Since only a few modes survive, the transforms are evaluated as
truncated DFT matrix products instead of full FFTs.

With ``mirror_axis1`` the second axis is extended by reflection about its
end nodes before the transform, so a field that peaks at the edge of the
plane (the top surface on the x-z section) does not wrap around into a
jump. The reflection is folded into the DFT matrices and costs nothing.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from ..meltpool.sections import PlaneGrid, PlaneSection
from ..params import NAMES, SWEEP_BOUNDS, ProcessParams
from .kernels import gelu_backward, gelu_forward

N_IN = len(NAMES) + 2
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FnoConfig:
    layers: int = 4
    width: int = 20
    modes: int = 12
    proj_width: int = 32
    activation: str = "gelu"
    lr: float = 0.01
    lr_decay: float = 0.7
    lr_step: int = 50
    epochs: int = 1000
    weight_decay: float = 1e-4
    batch_size: int = 16
    seed: int = 0
    mirror_axis1: bool = True

    def __post_init__(self):
        if self.width < 1 or self.modes < 1 or self.layers < 1:
            raise ValueError("layers, width and modes must be >= 1")
        if self.activation not in ("gelu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def gelu(z):
    return 0.5 * z * (1.0 + erf(z / _SQRT2))


def gelu_grad(z):
    return 0.5 * (1.0 + erf(z / _SQRT2)) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def mode_frequencies(n: int, modes: int) -> np.ndarray:
    """Signed frequencies kept along the full-complex axis (lowest magnitudes)."""
    pos = (modes + 1) // 2
    neg = modes // 2
    return np.concatenate([np.arange(pos), np.arange(-neg, 0)])


def mode_index(n: int, modes: int) -> np.ndarray:
    """Positions of the kept frequencies in an ``np.fft.fft`` output of length ``n``."""
    return np.mod(mode_frequencies(n, modes), n).astype(np.intp)


def check_modes(grid: PlaneGrid, modes: int):
    if modes > grid.n0 // 2 or modes > grid.n1 // 2:
        raise ValueError(f"{modes} modes exceed half of grid {grid.shape}")


def mirror_extend(h, axis=-1):
    """Whole-sample symmetric extension: length n becomes 2(n - 1)."""
    h = np.moveaxis(h, axis, -1)
    return np.moveaxis(np.concatenate([h, h[..., -2:0:-1]], axis=-1), -1, axis)


@lru_cache(maxsize=32)
def dft_operators(n0: int, n1: int, modes: int, mirror: bool = False):
    """Truncated forward/inverse DFT matrices for one grid.

    Forward: ``H = F0 @ (h @ F1)`` reproduces ``rfft2(h, norm="forward")``
    on the kept modes. Inverse: ``Re((E0 @ Y) @ E1)`` reproduces
    ``irfft2`` of the zero-padded half spectrum, where interior bins of
    the half axis count twice for their conjugate partner. With ``mirror``
    both act on :func:`mirror_extend` of axis 1, folded back onto ``n1``
    columns (the inverse is read off on the original nodes).
    """
    n1e = 2 * (n1 - 1) if mirror else n1
    kx = mode_frequencies(n0, modes)
    ky = np.arange(modes)
    x = np.arange(n0)
    y = np.arange(n1e)
    ang1 = 2.0 * np.pi * np.outer(y, ky) / n1e  # (n1e, my)
    F1 = np.concatenate([np.cos(ang1), -np.sin(ang1)], axis=1) / n1e  # real/imag halves
    if mirror:
        F1[1:n1 - 1] += F1[n1:][::-1]
        F1 = F1[:n1]
        ang1 = ang1[:n1]
    F0 = np.exp(-2j * np.pi * np.outer(kx, x) / n0) / n0  # (mx, n0)
    E0 = np.exp(2j * np.pi * np.outer(x, kx) / n0)  # (n0, mx)
    w = np.full(modes, 2.0)
    w[0] = 1.0
    E1 = np.concatenate([w[:, None] * np.cos(ang1.T), -w[:, None] * np.sin(ang1.T)], axis=0)
    ops = (F1, F0, E0, E1, np.ascontiguousarray(F1.T), np.conj(F0).T.copy(),
           np.conj(E0).T.copy(), np.ascontiguousarray(E1.T))
    for a in ops:
        a.setflags(write=False)
    return ops


def _mix(W, h):
    """Per-node channel mixing for channels-first ``h`` (B, c, n0, n1)."""
    B, c, n0, n1 = h.shape
    return np.matmul(W.T, h.reshape(B, c, n0 * n1)).reshape(B, W.shape[1], n0, n1)


def _mix_grads(h, g):
    """dW for out = W^T h given upstream g, both channels-first."""
    B, c = h.shape[:2]
    hh = h.reshape(B, c, -1)
    gg = g.reshape(B, g.shape[1], -1)
    out = hh[0] @ gg[0].T
    for b in range(1, B):  # fixed order keeps the reduction deterministic
        out += hh[b] @ gg[b].T
    return out


def spectral_forward(h, R, ops):
    """Kept Fourier coefficients times R, then back to the grid.

    Returns ``(s, H)`` where ``H`` (mx, my, B, c) is cached for backward.
    """
    F1, F0, E0, E1 = ops[:4]
    B, c, n0, n1 = h.shape
    my = R.shape[1]
    A = (h.reshape(-1, n1) @ F1).reshape(B, c, n0, 2, my)
    A = A[..., 0, :] + 1j * A[..., 1, :]  # (B, c, n0, my)
    A = A.transpose(2, 0, 1, 3).reshape(n0, -1)
    H = (F0 @ A).reshape(-1, B, c, my).transpose(0, 3, 1, 2)  # (mx, my, B, c)
    Y = np.matmul(H, R)  # (mx, my, B, o)
    o = R.shape[3]
    Z = (E0 @ Y.reshape(Y.shape[0], -1)).reshape(n0, my, B, o)
    Z = Z.transpose(2, 3, 0, 1)  # (B, o, n0, my)
    Zc = np.concatenate([Z.real, Z.imag], axis=-1).reshape(-1, 2 * my)
    s = (Zc @ E1).reshape(B, o, n0, n1)
    return s, H


def spectral_backward(gs, H, R, ops, want_R=True):
    """Adjoint of :func:`spectral_forward`: returns (d/dh, d/dR)."""
    F1T, F0H, E0H, E1T = ops[4:]
    B, o, n0, n1 = gs.shape
    mx, my = R.shape[:2]
    gZc = (gs.reshape(-1, n1) @ E1T).reshape(B, o, n0, 2, my)
    gZ = gZc[..., 0, :] + 1j * gZc[..., 1, :]
    gZ = gZ.transpose(2, 3, 0, 1).reshape(n0, -1)  # (n0, my*B*o)
    gY = (E0H @ gZ).reshape(mx, my, B, o)
    gR = np.matmul(np.conj(H).transpose(0, 1, 3, 2), gY) if want_R else None
    gH = np.matmul(gY, np.conj(R).transpose(0, 1, 3, 2))  # (mx, my, B, c)
    c = gH.shape[3]
    gA = (F0H @ gH.transpose(0, 2, 3, 1).reshape(mx, -1)).reshape(n0, B, c, my)
    gA = gA.transpose(1, 2, 0, 3)  # (B, c, n0, my)
    gAc = np.concatenate([gA.real, gA.imag], axis=-1).reshape(-1, 2 * my)
    gh = (gAc @ F1T).reshape(B, c, n0, n1)
    return gh, gR


class SurrogateModel:
    """Parameter container and forward/backward for one plane.

    ``params`` is an ordered dict; complex spectral tensors ``R{l}`` have
    shape ``(modes, modes, width, width)``.
    """

    def __init__(self, config: FnoConfig, grid: PlaneGrid, params: dict | None = None,
                 bounds: dict | None = None, T_scale: tuple = (300.0, 2740.0)):
        check_modes(grid, config.modes)
        self.config = config
        self.grid = grid
        self.bounds = {k: tuple(map(float, v)) for k, v in (bounds or SWEEP_BOUNDS).items()}
        self.T_scale = tuple(map(float, T_scale))
        self.params = params if params is not None else self.init_params(config, config.seed)
        self._check_shapes()

    @property
    def plane(self) -> str:
        return self.grid.plane

    # ------------------------------------------------------------ parameters
    @staticmethod
    def param_shapes(config: FnoConfig) -> dict:
        d, m, q = config.width, config.modes, config.proj_width
        shapes = {"lift_W": (N_IN, d), "lift_b": (d,)}
        for l in range(config.layers):
            shapes[f"W{l}"] = (d, d)
            shapes[f"c{l}"] = (d,)
            shapes[f"R{l}"] = (m, m, d, d)
        shapes.update({"proj1_W": (d, q), "proj1_b": (q,), "proj2_W": (q, 1), "proj2_b": (1,)})
        return shapes

    @classmethod
    def init_params(cls, config: FnoConfig, seed: int) -> dict:
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.param_shapes(config).items():
            if name.startswith("R"):
                scale = 1.0 / (config.width * config.modes)
                params[name] = scale * (rng.random(shape) + 1j * rng.random(shape))
            else:
                fan_in = shape[0] if len(shape) == 2 else cls._fan_in(name, config)
                bound = 1.0 / math.sqrt(fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape)
        return params

    @staticmethod
    def _fan_in(name, config):
        return {"lift_b": N_IN, "proj1_b": config.width, "proj2_b": config.proj_width}.get(
            name, config.width)

    def _check_shapes(self):
        expected = self.param_shapes(self.config)
        if list(expected) != list(self.params):
            raise ValueError("parameter names/order do not match the configuration")
        for k, shape in expected.items():
            if tuple(self.params[k].shape) != shape:
                raise ValueError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")

    def n_parameters(self) -> int:
        return int(sum(v.size * (2 if np.iscomplexobj(v) else 1) for v in self.params.values()))

    # ---------------------------------------------------------- normalization
    def normalize_inputs(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Min-max scale (batch, 4) parameters; returns (scaled, outside-bounds mask)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lo = np.array([self.bounds[n][0] for n in NAMES])
        hi = np.array([self.bounds[n][1] for n in NAMES])
        return (xi - lo) / (hi - lo), (xi < lo) | (xi > hi)

    def input_scale(self) -> np.ndarray:
        return np.array([1.0 / (self.bounds[n][1] - self.bounds[n][0]) for n in NAMES])

    def to_kelvin(self, u):
        lo, hi = self.T_scale
        return lo + (hi - lo) * u

    def to_normalized(self, T):
        lo, hi = self.T_scale
        return (np.asarray(T) - lo) / (hi - lo)

    def build_input_channels(self, xi, grid: PlaneGrid | None = None):
        """Constant parameter channels plus coordinate channels (0 to 1 on the training grid).

        Returns ``(channels, flags)`` where ``flags`` marks parameters that
        extrapolate beyond the normalization bounds.
        """
        grid = grid or self.grid
        scaled, outside = self.normalize_inputs(xi)
        B = scaled.shape[0]
        X = np.empty((B, N_IN, grid.n0, grid.n1))
        X[:, :4] = scaled[:, :, None, None]
        # positions measured on the training grid, so refined grids see the same map
        g = self.grid
        X[:, 4] = ((grid.coords0 - g.start0) / (g.step0 * (g.n0 - 1)))[None, :, None]
        X[:, 5] = ((grid.coords1 - g.start1) / (g.step1 * (g.n1 - 1)))[None, None, :]
        return X, outside

    # --------------------------------------------------------------- forward
    def _act(self, z):
        """Activation value plus what its derivative needs later."""
        if self.config.activation == "identity":
            return z, None
        a = np.empty_like(z)
        cdf = np.empty_like(z)
        gelu_forward(z.reshape(-1), a.reshape(-1), cdf.reshape(-1))
        return a, cdf

    @staticmethod
    def _act_backward(g, z, cdf):
        if cdf is None:
            return g
        out = np.empty_like(z)
        gelu_backward(np.ascontiguousarray(g).reshape(-1), z.reshape(-1), cdf.reshape(-1),
                      out.reshape(-1))
        return out

    def forward_channels(self, X, tape: bool = False):
        """Normalized output ``(batch, n0, n1)`` from channels-first inputs."""
        p, cfg = self.params, self.config
        B, _, n0, n1 = X.shape
        ops = dft_operators(n0, n1, cfg.modes, cfg.mirror_axis1)
        h = _mix(p["lift_W"], X) + p["lift_b"][:, None, None]
        caches = []
        for l in range(cfg.layers):
            s, H = spectral_forward(h, p[f"R{l}"], ops)
            z = _mix(p[f"W{l}"], h)
            z += s
            z += p[f"c{l}"][:, None, None]
            if l == cfg.layers - 1:
                a, aux = z, None
            else:
                a, aux = self._act(z)
            if tape:
                caches.append((h, H, z, aux))
            h = a
        z1 = _mix(p["proj1_W"], h) + p["proj1_b"][:, None, None]
        a1, aux1 = self._act(z1)
        u = _mix(p["proj2_W"], a1)[:, 0] + p["proj2_b"][0]
        if tape:
            return u, {"X": X, "layers": caches, "h": h, "z1": z1, "aux1": aux1, "a1": a1,
                       "ops": ops}
        return u

    def backward(self, tape: dict, gu: np.ndarray, want_params: bool = True):
        """Reverse pass from d(loss)/d(normalized output).

        Returns ``(param_grads or None, d(loss)/d(input channels))``.
        """
        p, cfg = self.params, self.config
        ops = tape["ops"]
        grads = {}
        g = gu[:, None]
        if want_params:
            grads["proj2_W"] = _mix_grads(tape["a1"], g)
            grads["proj2_b"] = np.array([g.sum()])
        g = self._act_backward(_mix(p["proj2_W"].T, g), tape["z1"], tape["aux1"])
        if want_params:
            grads["proj1_W"] = _mix_grads(tape["h"], g)
            grads["proj1_b"] = g.sum(axis=(0, 2, 3))
        gh = _mix(p["proj1_W"].T, g)
        for l in reversed(range(cfg.layers)):
            h_in, H, z, aux = tape["layers"][l]
            gz = gh if aux is None else self._act_backward(gh, z, aux)
            g_spec, gR = spectral_backward(gz, H, p[f"R{l}"], ops, want_R=want_params)
            if want_params:
                grads[f"W{l}"] = _mix_grads(h_in, gz)
                grads[f"c{l}"] = gz.sum(axis=(0, 2, 3))
                grads[f"R{l}"] = gR
            gh = _mix(p[f"W{l}"].T, gz)
            gh += g_spec
        if want_params:
            grads["lift_W"] = _mix_grads(tape["X"], gh)
            grads["lift_b"] = gh.sum(axis=(0, 2, 3))
            grads = {k: grads[k] for k in p}
        gX = _mix(p["lift_W"].T, gh)
        return (grads if want_params else None), gX

    # ----------------------------------------------------------- conveniences
    def _grid_for(self, grid):
        grid = grid or self.grid
        if grid.plane != self.grid.plane:
            raise ValueError(f"model trained on plane {self.plane!r}, asked for {grid.plane!r}")
        check_modes(grid, self.config.modes)
        return grid

    def predict_kelvin(self, xi, grid: PlaneGrid | None = None) -> np.ndarray:
        """Temperatures (batch, n0, n1) in kelvin for a (batch, 4) parameter array."""
        grid = self._grid_for(grid)
        X, _ = self.build_input_channels(xi, grid)
        return self.to_kelvin(self.forward_channels(X))

    def forward(self, params: ProcessParams, grid: PlaneGrid | None = None) -> PlaneSection:
        grid = self._grid_for(grid)
        X, outside = self.build_input_channels(params.as_array(), grid)
        T = self.to_kelvin(self.forward_channels(X))[0]
        flags = [n for n, o in zip(NAMES, outside[0]) if o]
        return PlaneSection(grid, T, False, {"extrapolated": flags})

    def forward_with_tape(self, xi, grid: PlaneGrid | None = None):
        grid = self._grid_for(grid)
        X, _ = self.build_input_channels(xi, grid)
        u, tape = self.forward_channels(X, tape=True)
        return self.to_kelvin(u), tape

    def backward_to_inputs(self, tape, gT: np.ndarray) -> np.ndarray:
        """d/d(P, V, T_sub, alpha) per batch member from d/dT (kelvin)."""
        lo, hi = self.T_scale
        _, gX = self.backward(tape, gT * (hi - lo), want_params=False)
        return gX[:, :4].sum(axis=(2, 3)) * self.input_scale()

    def loss_and_gradients(self, xi, targets_T, return_pred: bool = False):
        """Mean squared error on normalized temperatures and its parameter gradients."""
        X, _ = self.build_input_channels(xi)
        u, tape = self.forward_channels(X, tape=True)
        r = u - self.to_normalized(targets_T)
        loss = float(np.mean(r * r))
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss {loss}")
        grads, _ = self.backward(tape, 2.0 * r / r.size)
        return (loss, grads, u) if return_pred else (loss, grads)

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(self.config, self.grid, {k: v.copy() for k, v in self.params.items()},
                              self.bounds, self.T_scale)


def input_gradients(model: SurrogateModel, params: ProcessParams, functional) -> np.ndarray:
    """Gradient of ``functional(T)`` with respect to (P, V, T_sub, alpha).

    ``functional`` maps a temperature field (n0, n1) to ``(value, dvalue/dT)``
    and must declare ``smooth = True``; hard indicator-based extractors have
    zero gradient almost everywhere and are rejected.
    """
    if not getattr(functional, "smooth", False):
        raise ValueError("input gradients need a smooth functional (use smooth feature variants)")
    T, tape = model.forward_with_tape(params.as_array())
    _, gT = functional(T[0])
    return model.backward_to_inputs(tape, np.asarray(gT)[None])[0]


class MeanTemperature:
    """Mean output temperature over the grid (a smooth functional)."""

    smooth = True

    def __call__(self, T):
        return float(T.mean()), np.full(T.shape, 1.0 / T.size)
