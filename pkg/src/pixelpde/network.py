"""Two-layer convolutional vector fields and exact stencil representations.

The parametric field is

    F(u) = H * act(K * u + b1) + b2

with K a (C,1,k,k) filter bank, H a (1,C,k',k') bank, per-channel bias b1 and
scalar bias b2. ``construct_linear`` and ``construct_quadratic`` return weight
settings under which F reproduces, exactly in exact arithmetic, a single
stencil correlation or a full quadratic-interaction right-hand side. The
identities behind them:

    relu(x) - relu(-x) = x
    relu2(x) + relu2(-x) = x^2
    (1/(1+a)) (leaky(x) - leaky(-x)) = x

Constructed parameter objects are ordinary networks; training is free to move
away from the constructive values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import (
    Field,
    FilterBank,
    _conv_bank_raw,
    _conv_bank_input_grad,
    _conv_bank_weight_grad,
    embed_stencil,
)
from .stencils import PDESpec, Stencil

__all__ = [
    "Activation",
    "RELU",
    "RELU2",
    "leaky_relu",
    "TwoLayerNetParams",
    "activate",
    "eval_net",
    "construct_linear",
    "construct_quadratic",
    "count_params",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_to_json",
    "checkpoint_from_json",
]

_KINDS = ("relu", "relu2", "leaky_relu")


@dataclass(frozen=True)
class Activation:
    """Entry-wise nonlinearity: relu, squared relu, or leaky relu with slope a."""

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation {self.kind!r}, expected one of {_KINDS}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky slope must lie in (0,1), got {self.slope}")


RELU = Activation("relu")
RELU2 = Activation("relu2")


def leaky_relu(slope: float) -> Activation:
    return Activation("leaky_relu", slope)


def activate(a: Activation, x):
    """Apply the activation entry-wise (scalars or arrays)."""
    x = np.asarray(x, dtype=np.float64)
    if a.kind == "relu":
        out = np.maximum(0.0, x)
    elif a.kind == "relu2":
        out = np.maximum(0.0, x) ** 2
    else:
        out = np.maximum(a.slope * x, x)
    return out if out.ndim else float(out)


def _activate_deriv(a: Activation, x: np.ndarray) -> np.ndarray:
    # subgradient at 0 fixed to the "inactive" branch value for determinism
    if a.kind == "relu":
        return (x > 0).astype(np.float64)
    if a.kind == "relu2":
        return 2.0 * np.maximum(0.0, x)
    return np.where(x > 0, 1.0, a.slope)


@dataclass(frozen=True)
class TwoLayerNetParams:
    """Weights of the two-layer convolutional vector field."""

    k_bank: FilterBank
    h_bank: FilterBank
    b1: np.ndarray
    b2: float
    activation: Activation

    def __post_init__(self):
        b1 = np.asarray(self.b1, dtype=np.float64).ravel()
        if self.k_bank.c_in != 1 or self.h_bank.c_out != 1:
            raise ValueError("expected a single-field input and a single-field output")
        if self.h_bank.c_in != self.k_bank.c_out:
            raise ValueError(
                f"channel mismatch: first layer outputs {self.k_bank.c_out}, "
                f"second expects {self.h_bank.c_in}"
            )
        if b1.shape[0] != self.k_bank.c_out:
            raise ValueError(f"b1 must have {self.k_bank.c_out} entries, got {b1.shape[0]}")
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def channels(self) -> int:
        return self.k_bank.c_out

    def with_weights(self, k_w, h_w, b1, b2) -> "TwoLayerNetParams":
        return TwoLayerNetParams(FilterBank(k_w), FilterBank(h_w), b1, b2, self.activation)


# ---------------------------------------------------------------------------
# forward / reverse kernels on raw arrays (training reuses these)
# ---------------------------------------------------------------------------


def _net_forward_raw(theta: TwoLayerNetParams, x: np.ndarray, want_tape: bool = False):
    """F(x) for x of shape (..., p, p); optionally keep intermediates."""
    y = _conv_bank_raw(x[..., None, :, :], theta.k_bank.weights)
    y += theta.b1[:, None, None]
    z = activate(theta.activation, y)
    out = _conv_bank_raw(z, theta.h_bank.weights)[..., 0, :, :] + theta.b2
    if want_tape:
        return out, (x, y, z)
    return out


def _net_vjp(theta: TwoLayerNetParams, tape, g: np.ndarray):
    """Adjoint of :func:`_net_forward_raw`.

    g has the output's shape (..., p, p). Returns the input adjoint plus
    parameter gradients summed over all leading axes.
    """
    x, y, z = tape
    g_out = g[..., None, :, :]
    batch_axes = tuple(range(g.ndim - 2))
    db2 = float(np.sum(g))
    dh = _conv_bank_weight_grad(z, g_out, theta.h_bank.k)
    gz = _conv_bank_input_grad(g_out, theta.h_bank.weights)
    gy = gz * _activate_deriv(theta.activation, y)
    db1 = np.sum(gy, axis=batch_axes + (-2, -1))
    dk = _conv_bank_weight_grad(x[..., None, :, :], gy, theta.k_bank.k)
    gx = _conv_bank_input_grad(gy, theta.k_bank.weights)[..., 0, :, :]
    return gx, dk, dh, db1, db2


def eval_net(theta: TwoLayerNetParams, u: Field) -> Field:
    """Evaluate the two-layer convolutional vector field at a field."""
    return u.like(_net_forward_raw(theta, u.data))


# ---------------------------------------------------------------------------
# constructive weights
# ---------------------------------------------------------------------------


def construct_linear(
    L: Stencil, filter_size: int = 3, activation: Activation = RELU, h_filter_size: int | None = None
) -> TwoLayerNetParams:
    """Two-channel weights whose network output is exactly ``L * u``.

    Channel pair (+L, -L) feeds the odd part of the activation; the second
    layer recombines with coefficients +-1 (relu) or +-1/(1+a) (leaky).
    """
    if activation.kind == "relu2":
        raise ValueError("relu2 cannot represent a plain linear stencil; use construct_quadratic")
    if h_filter_size is None:
        h_filter_size = filter_size
    emb = embed_stencil(L.coeffs, filter_size)
    k_w = np.stack([emb[None], -emb[None]])  # (2, 1, k, k)
    scale = 1.0 if activation.kind == "relu" else 1.0 / (1.0 + activation.slope)
    h_w = np.zeros((1, 2, h_filter_size, h_filter_size))
    c = (h_filter_size - 1) // 2
    h_w[0, 0, c, c] = scale
    h_w[0, 1, c, c] = -scale
    return TwoLayerNetParams(FilterBank(k_w), FilterBank(h_w), np.zeros(2), 0.0, activation)


def construct_quadratic(
    spec: PDESpec, filter_size: int = 3, h_filter_size: int | None = None
) -> TwoLayerNetParams:
    """Squared-relu weights whose network output equals the full RHS of ``spec``.

    Uses 4 channels for the linear stencil (shifted-square trick, which needs
    the bias pair (+1,-1) and output bias -1/2) plus 6 channels per quadratic
    interaction (polarization of the product into three squares).
    """
    if h_filter_size is None:
        h_filter_size = filter_size
    n_inter = spec.n_interactions
    channels = 4 + 6 * n_inter
    lw = embed_stencil(spec.linear.coeffs, filter_size)

    k_list = [lw, -lw, lw, -lw]
    h_coef = [0.5, 0.5, -0.5, -0.5]
    for term in spec.interactions:
        da = embed_stencil(term.d_a.coeffs, filter_size)
        db = embed_stencil(term.d_b.coeffs, filter_size)
        k_list += [da + db, -(da + db), da, -da, db, -db]
        hb = term.beta / 2.0
        h_coef += [hb, hb, -hb, -hb, -hb, -hb]

    k_w = np.stack(k_list)[:, None]  # (C, 1, k, k)
    h_w = np.zeros((1, channels, h_filter_size, h_filter_size))
    c = (h_filter_size - 1) // 2
    h_w[0, :, c, c] = h_coef
    b1 = np.zeros(channels)
    b1[0], b1[1] = 1.0, -1.0
    return TwoLayerNetParams(FilterBank(k_w), FilterBank(h_w), b1, -0.5, RELU2)


def count_params(theta: TwoLayerNetParams) -> int:
    """Total scalar parameter count."""
    return int(
        theta.k_bank.weights.size + theta.h_bank.weights.size + theta.b1.size + 1
    )


# ---------------------------------------------------------------------------
# checkpoint format (JSON; float values round-trip bit-exactly)
# ---------------------------------------------------------------------------


def checkpoint_to_json(theta: TwoLayerNetParams, extra: dict | None = None) -> str:
    doc = {
        "format": "pixelpde-checkpoint",
        "version": 1,
        "activation": {"kind": theta.activation.kind, "slope": theta.activation.slope},
        "shapes": {
            "k_bank": list(theta.k_bank.weights.shape),
            "h_bank": list(theta.h_bank.weights.shape),
            "b1": [int(theta.b1.size)],
        },
        "k_bank": theta.k_bank.weights.ravel().tolist(),
        "h_bank": theta.h_bank.weights.ravel().tolist(),
        "b1": theta.b1.tolist(),
        "b2": theta.b2,
    }
    if extra:
        doc["extra"] = extra
    return json.dumps(doc, indent=1)


def checkpoint_from_json(text: str) -> TwoLayerNetParams:
    doc = json.loads(text)
    if doc.get("format") != "pixelpde-checkpoint":
        raise ValueError("not a pixelpde checkpoint")
    act = Activation(doc["activation"]["kind"], doc["activation"]["slope"])
    shapes = doc["shapes"]
    k_w = np.asarray(doc["k_bank"], dtype=np.float64).reshape(shapes["k_bank"])
    h_w = np.asarray(doc["h_bank"], dtype=np.float64).reshape(shapes["h_bank"])
    return TwoLayerNetParams(FilterBank(k_w), FilterBank(h_w), doc["b1"], doc["b2"], act)


def save_checkpoint(theta: TwoLayerNetParams, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(checkpoint_to_json(theta, extra))


def load_checkpoint(path) -> TwoLayerNetParams:
    with open(path, "r", encoding="utf-8") as fh:
        return checkpoint_from_json(fh.read())
