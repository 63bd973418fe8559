"""Process parameters and the envelopes they are checked against."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

NAMES = ("P", "V", "T_sub", "alpha")

# bounds the solver is trusted within
SOLVER_ENVELOPE = {"P": (50.0, 600.0), "V": (0.25, 3.0), "T_sub": (300.0, 600.0),
                   "alpha": (0.05, 0.7)}

# sweep bounds used for surrogate input normalization
SWEEP_BOUNDS = {"P": (100.0, 500.0), "V": (0.5, 2.5), "T_sub": (300.0, 540.0),
                "alpha": (0.1, 0.6)}


@dataclass(frozen=True)
class ProcessParams:
    P: float  # laser power, W
    V: float  # scan speed, m/s
    T_sub: float  # substrate temperature, K
    alpha: float  # absorptivity

    def as_array(self) -> np.ndarray:
        return np.array([self.P, self.V, self.T_sub, self.alpha], dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_array(cls, values) -> "ProcessParams":
        return cls(*(float(v) for v in values))

    def outside(self, bounds: dict) -> list[str]:
        """Names of the parameters lying outside ``bounds``."""
        return [n for n in NAMES
                if not bounds[n][0] <= getattr(self, n) <= bounds[n][1]]
