"""Independent brute-force oracles shared by the test modules.

Everything here is deliberately naive (explicit loops, modular indexing) so it
cannot share a bug with the vectorized library code it checks.
"""

import numpy as np


def conv_oracle(u: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Periodic same-size correlation via an explicit double loop."""
    p = u.shape[0]
    ksz = filt.shape[0]
    m = (ksz - 1) // 2
    out = np.zeros_like(u, dtype=np.float64)
    for h in range(p):
        for k in range(p):
            acc = 0.0
            for a in range(ksz):
                for b in range(ksz):
                    acc += filt[a, b] * u[(h + a - m) % p, (k + b - m) % p]
            out[h, k] = acc
    return out


def conv_bank_oracle(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Summed double-loop correlation for a (c_out, c_in, k, k) bank."""
    c_out = weights.shape[0]
    out = np.zeros((c_out,) + x.shape[1:])
    for i in range(c_out):
        for j in range(x.shape[0]):
            out[i] += conv_oracle(x[j], weights[i, j])
    return out


def pad_oracle(u: np.ndarray, margin: int) -> np.ndarray:
    p = u.shape[0]
    size = p + 2 * margin
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            out[i, j] = u[(i - margin) % p, (j - margin) % p]
    return out


def rhs_oracle(u, linear, interactions):
    """eval_rhs from raw coefficient matrices via conv_oracle."""
    out = conv_oracle(u, linear)
    for beta, d_a, d_b in interactions:
        out = out + beta * conv_oracle(u, d_a) * conv_oracle(u, d_b)
    return out


def fitted_order(errors, spacings) -> float:
    """Least-squares slope of log(error) against log(spacing)."""
    return float(np.polyfit(np.log(spacings), np.log(errors), 1)[0])


def rel_err(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
