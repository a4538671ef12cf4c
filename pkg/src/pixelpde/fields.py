"""Dense field containers and periodic "same" convolution.

A field is a p-by-p matrix of nodal values on the uniform doubly periodic grid
over [0,1]^2, with row index h mapping to the x coordinate and column index k
to the y coordinate. All convolutions use the correlation convention: the
output entry at (h,k) is the Frobenius inner product of the filter with the
K-by-K window of the periodically padded input centered at (h,k). That single
convention is used project-wide; stencil orientation in :mod:`pixelpde.stencils`
relies on it.

All arithmetic is in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Field",
    "ChannelStack",
    "FilterBank",
    "pad_periodic",
    "conv2d_same",
    "conv_bank",
    "embed_stencil",
    "frobenius_norm",
    "frobenius_inner",
]


def _as_f64_matrix(a, name="array"):
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class Field:
    """A p-by-p grid of solution values with grid spacing ``dx``.

    Rows index x, columns index y: ``data[h, k]`` approximates u(x_h, y_k)
    with x_h = h*dx on the periodic unit square.
    """

    data: np.ndarray
    dx: float

    def __post_init__(self):
        data = _as_f64_matrix(self.data, "Field.data")
        if data.shape[0] != data.shape[1]:
            raise ValueError(f"Field.data must be square, got {data.shape}")
        if data.shape[0] < 3:
            raise ValueError(f"Field needs p >= 3, got p={data.shape[0]}")
        if not self.dx > 0:
            raise ValueError(f"Field.dx must be positive, got {self.dx}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dx", float(self.dx))

    @property
    def p(self) -> int:
        return self.data.shape[0]

    def like(self, data: np.ndarray) -> "Field":
        """A new Field on the same grid with different values."""
        return Field(data, self.dx)


@dataclass(frozen=True)
class ChannelStack:
    """C fields sharing one grid, stored as a (C, p, p) array."""

    channels: np.ndarray
    dx: float

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3 or ch.shape[1] != ch.shape[2]:
            raise ValueError(f"ChannelStack needs shape (C, p, p), got {ch.shape}")
        if not self.dx > 0:
            raise ValueError(f"ChannelStack.dx must be positive, got {self.dx}")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "dx", float(self.dx))

    @property
    def c(self) -> int:
        return self.channels.shape[0]

    @property
    def p(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class FilterBank:
    """An order-4 stack of convolution filters, shape (c_out, c_in, k, k)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ValueError(f"FilterBank needs shape (c_out, c_in, k, k), got {w.shape}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("FilterBank needs at least one input and output channel")
        if w.shape[2] % 2 == 0:
            raise ValueError(f"filter size must be odd, got {w.shape[2]}")
        object.__setattr__(self, "weights", w)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(a * a)))


def frobenius_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b))


# ---------------------------------------------------------------------------
# raw kernels on plain arrays; public wrappers below
# ---------------------------------------------------------------------------


def _pad_periodic_raw(a: np.ndarray, margin: int) -> np.ndarray:
    """Wrap-pad the last two axes of ``a`` by ``margin`` on each side."""
    pad = [(0, 0)] * (a.ndim - 2) + [(margin, margin), (margin, margin)]
    return np.pad(a, pad, mode="wrap")


def _conv_windows(a: np.ndarray, k: int) -> np.ndarray:
    """Sliding k-by-k windows of the periodically padded last two axes.

    Output shape ``a.shape + (k, k)``; entry [..., h, x, a, b] is
    a[..., (h+a-m) mod p, (x+b-m) mod p] for m=(k-1)//2.
    """
    m = (k - 1) // 2
    padded = _pad_periodic_raw(a, m)
    return sliding_window_view(padded, (k, k), axis=(-2, -1))


def _conv_same_raw(a: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Periodic same-size correlation of a (..., p, p) array with one filter."""
    win = _conv_windows(a, filt.shape[0])
    return np.einsum("...ab,ab->...", win, filt)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Contiguous window matrix of a (..., c_in, p, p) array.

    Output shape (..., p, p, c_in*k*k); row (..., h, x, :) holds the filter
    window at that output position, channels-major then window rows/columns.
    """
    win = _conv_windows(x, k)  # (..., c_in, p, p, k, k)
    moved = np.moveaxis(win, -5, -3)  # (..., p, p, c_in, k, k)
    lead = x.shape[:-3] + x.shape[-2:]
    return np.ascontiguousarray(moved).reshape(lead + (x.shape[-3] * k * k,))


def _conv_bank_raw(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Multi-channel periodic correlation.

    x: (..., c_in, p, p); weights: (c_out, c_in, k, k) -> (..., c_out, p, p).
    One matmul performs the channel and window reductions, so the result is
    deterministic within a build.
    """
    c_out, c_in, k, _ = weights.shape
    cols = _im2col(x, k)
    out = cols @ weights.reshape(c_out, c_in * k * k).T  # (..., p, p, c_out)
    return np.moveaxis(out, -1, -3)


def _conv_bank_input_grad(g: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_conv_bank_raw` in its input.

    The adjoint of periodic correlation is periodic correlation with the
    spatially flipped filter, with input/output channels swapped.
    """
    w_adj = weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return _conv_bank_raw(g, np.ascontiguousarray(w_adj))


def _conv_bank_weight_grad(x: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    """Adjoint of :func:`_conv_bank_raw` in its weights.

    x: (..., c_in, p, p) forward input, g: (..., c_out, p, p) output adjoint;
    returns (c_out, c_in, k, k), summed over all leading axes.
    """
    c_in = x.shape[-3]
    c_out = g.shape[-3]
    cols = _im2col(x, k).reshape(-1, c_in * k * k)
    g_mat = np.ascontiguousarray(np.moveaxis(g, -3, -1)).reshape(-1, c_out)
    return (g_mat.T @ cols).reshape(c_out, c_in, k, k)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def pad_periodic(u: Field, margin: int) -> np.ndarray:
    """Periodically pad ``u`` by ``margin`` rows/columns on every side.

    Entry (i, j) of the output is ``u.data[(i - margin) % p, (j - margin) % p]``.
    """
    if margin < 1:
        raise ValueError(f"margin must be positive, got {margin}")
    if margin > u.p:
        raise ValueError(f"margin {margin} exceeds grid size p={u.p}")
    return _pad_periodic_raw(u.data, margin)


def conv2d_same(u: Field, filt: np.ndarray) -> Field:
    """Same-size periodic correlation of a field with one odd-sized filter."""
    filt = _as_f64_matrix(filt, "filter")
    k = filt.shape[0]
    if filt.shape[0] != filt.shape[1]:
        raise ValueError(f"filter must be square, got {filt.shape}")
    if k % 2 == 0:
        raise ValueError(f"filter size must be odd, got {k}")
    if k > 2 * u.p + 1:
        raise ValueError(f"filter size {k} too large for p={u.p}")
    return u.like(_conv_same_raw(u.data, filt))


def conv_bank(x: ChannelStack, bank: FilterBank) -> ChannelStack:
    """Apply a filter bank to a channel stack; output channel i sums
    ``conv2d_same(x_j, bank[i, j])`` over input channels j."""
    if bank.c_in != x.c:
        raise ValueError(f"bank expects {bank.c_in} input channels, stack has {x.c}")
    if bank.k > 2 * x.p + 1:
        raise ValueError(f"filter size {bank.k} too large for p={x.p}")
    if bank.c_in == 1 and bank.c_out == 1:
        # bit-for-bit agreement with the single-filter path
        out = _conv_same_raw(x.channels[0], bank.weights[0, 0])[None]
        return ChannelStack(out, x.dx)
    return ChannelStack(_conv_bank_raw(x.channels, bank.weights), x.dx)


def embed_stencil(s: np.ndarray, target_k: int) -> np.ndarray:
    """Center a small odd filter inside a zero ``target_k``-sized filter.

    Convolving with the embedding equals convolving with ``s`` for every field.
    """
    s = _as_f64_matrix(s, "stencil")
    k = s.shape[0]
    if s.shape[0] != s.shape[1] or k % 2 == 0:
        raise ValueError(f"stencil must be square with odd size, got {s.shape}")
    if target_k % 2 == 0 or target_k < k:
        raise ValueError(f"target size must be odd and >= {k}, got {target_k}")
    if target_k == k:
        return s.copy()
    out = np.zeros((target_k, target_k))
    o = (target_k - k) // 2
    out[o : o + k, o : o + k] = s
    return out
