"""NumPy fallback for the fused activation kernels (same signatures)."""
import math

import numpy as np
from scipy.special import erf

_RSQRT2 = 1.0 / math.sqrt(2.0)
_RSQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_forward(z, out, cdf):
    np.multiply(z, _RSQRT2, out=cdf)
    erf(cdf, out=cdf)
    cdf += 1.0
    cdf *= 0.5
    np.multiply(z, cdf, out=out)


def gelu_backward(g, z, cdf, out):
    np.multiply(z, z, out=out)
    out *= -0.5
    np.exp(out, out=out)
    out *= z
    out *= _RSQRT2PI
    out += cdf
    out *= g
