"""Rollout losses, exact reverse-mode gradients, Adam, and curriculum training.

The loss is the mean squared Frobenius error between Q-step rollouts of the
network map and stored reference frames, optionally with a fresh uniform
perturbation of each initial condition per call (noise injection).

Gradients are computed by backpropagation through the whole composite map:
both convolution layers (the adjoint of periodic correlation is periodic
correlation with the flipped filter), the activation, the k Euler substeps,
the norm-projection rescaling when the norm-preserving scheme is selected
(differentiated exactly, not detached), and the Q-step rollout with shared
weights. Everything is vectorized over the batch; parameter reductions run
in ascending dataset order so runs are reproducible.

For the ``norm_projected_euler`` scheme the network's vector field is used in
tangent-projected form (the component along the current state is removed), so
the continuous flow already preserves the norm and the per-substep rescaling
is a small correction; this is the pairing the norm-preserving experiments
use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import DegenerateInputError, DivergenceError
from .fields import FilterBank
from .integrators import StepperConfig
from .network import TwoLayerNetParams, _net_forward_raw, _net_vjp, Activation, save_checkpoint

__all__ = [
    "Gradients",
    "LossConfig",
    "TrainConfig",
    "AdamState",
    "init_adam_state",
    "adam_step",
    "init_params",
    "loss",
    "grad_loss",
    "HistoryRow",
    "train_curriculum",
    "save_history_csv",
]


@dataclass(frozen=True)
class Gradients:
    """Loss gradients, shape-congruent with :class:`TwoLayerNetParams`."""

    k_w: np.ndarray
    h_w: np.ndarray
    b1: np.ndarray
    b2: float

    @staticmethod
    def zeros_like(theta: TwoLayerNetParams) -> "Gradients":
        return Gradients(
            np.zeros_like(theta.k_bank.weights),
            np.zeros_like(theta.h_bank.weights),
            np.zeros_like(theta.b1),
            0.0,
        )

    def norm(self) -> float:
        sq = (
            np.sum(self.k_w**2)
            + np.sum(self.h_w**2)
            + np.sum(self.b1**2)
            + self.b2**2
        )
        return float(np.sqrt(sq))

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.k_w))
            and np.all(np.isfinite(self.h_w))
            and np.all(np.isfinite(self.b1))
            and np.isfinite(self.b2)
        )


@dataclass(frozen=True)
class LossConfig:
    """Rollout length and input-noise amplitude for the training loss."""

    rollout_len: int
    noise_eps: float = 0.0

    def __post_init__(self):
        if self.rollout_len < 1:
            raise ValueError("rollout_len must be >= 1")
        if self.noise_eps < 0:
            raise ValueError("noise_eps must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    """Curriculum schedule; defaults follow the reference training procedure."""

    epochs_per_stage: int = 300
    lr0: float = 5e-3
    lr_drop_epochs: tuple[int, ...] = (135, 270)
    lr_drop_factor: float = 10.0
    stage_rollouts: tuple[int, ...] = (2, 3, 4)
    stage_lr_halving: float = 2.0
    batch_size: int = 32
    seed: int = 0
    adam: tuple[float, float, float] = (0.9, 0.999, 1e-8)

    def __post_init__(self):
        if self.epochs_per_stage < 0:
            raise ValueError("epochs_per_stage must be >= 0")
        if not (self.lr0 > 0 and self.lr_drop_factor > 0 and self.stage_lr_halving > 0):
            raise ValueError("learning-rate parameters must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        drops = tuple(self.lr_drop_epochs)
        if self.epochs_per_stage > 0 and any(
            d < 0 or d >= self.epochs_per_stage for d in drops
        ):
            raise ValueError("lr_drop_epochs must lie inside [0, epochs_per_stage)")
        if list(drops) != sorted(set(drops)):
            raise ValueError("lr_drop_epochs must be strictly increasing")
        if not all(q >= 1 for q in self.stage_rollouts):
            raise ValueError("stage rollout lengths must be >= 1")
        object.__setattr__(self, "lr_drop_epochs", drops)
        object.__setattr__(self, "stage_rollouts", tuple(self.stage_rollouts))


# ---------------------------------------------------------------------------
# forward + reverse through the unrolled map
# ---------------------------------------------------------------------------


def _scheme_flags(cfg: StepperConfig) -> tuple[bool, bool]:
    projected = cfg.scheme == "norm_projected_euler"
    return projected, projected


def _rollout_loss_raw(
    theta: TwoLayerNetParams,
    x0: np.ndarray,
    targets: np.ndarray,
    h: float,
    substeps: int,
    project_field: bool,
    project_norm: bool,
    want_grad: bool,
):
    """Core engine. x0: (B,p,p); targets: (B,Q,p,p). Returns (loss, grads|None)."""
    n_batch, n_roll = targets.shape[0], targets.shape[1]
    x = x0
    tapes = []
    preds = []
    for _q in range(n_roll):
        for _s in range(substeps):
            f_raw, net_tape = _net_forward_raw(theta, x, want_tape=True)
            if project_field:
                qip = np.sum(x * x, axis=(-2, -1))
                if np.any(qip == 0.0):
                    raise DegenerateInputError("tangent projection at a zero field")
                sip = np.sum(x * f_raw, axis=(-2, -1))
                f_used = f_raw - x * (sip / qip)[:, None, None]
            else:
                sip = qip = None
                f_used = f_raw
            v = x + h * f_used
            if project_norm:
                nu = np.sqrt(np.sum(x * x, axis=(-2, -1)))
                nv = np.sqrt(np.sum(v * v, axis=(-2, -1)))
                if np.any(nv == 0.0):
                    raise DegenerateInputError("norm projection hit a zero-norm state")
                x_next = v * (nu / nv)[:, None, None]
            else:
                nu = nv = None
                x_next = v
            if want_grad:
                tapes.append((x, net_tape, f_raw, sip, qip, v, nu, nv))
            x = x_next
        preds.append(x)

    residuals = [preds[q] - targets[:, q] for q in range(n_roll)]
    scale = 1.0 / (n_batch * n_roll)
    loss_val = scale * float(sum(np.sum(r * r) for r in residuals))
    if not np.isfinite(loss_val):
        raise DivergenceError("loss is not finite (rollout diverged)")
    if not want_grad:
        return loss_val, None

    g_k = np.zeros_like(theta.k_bank.weights)
    g_h = np.zeros_like(theta.h_bank.weights)
    g_b1 = np.zeros_like(theta.b1)
    g_b2 = 0.0
    a = np.zeros_like(x0)
    for q in reversed(range(n_roll)):
        a = a + (2.0 * scale) * residuals[q]
        for s in reversed(range(substeps)):
            x, net_tape, f_raw, sip, qip, v, nu, nv = tapes[q * substeps + s]
            if project_norm:
                ratio = nu / nv
                vg = np.sum(v * a, axis=(-2, -1))
                gv = a * ratio[:, None, None] - v * (vg * nu / nv**3)[:, None, None]
                gx = x * (vg / (nu * nv))[:, None, None]
            else:
                gv = a
                gx = np.zeros_like(a)
            gfp = h * gv
            gx = gx + gv
            if project_field:
                c1 = np.sum(x * gfp, axis=(-2, -1))
                gf = gfp - x * (c1 / qip)[:, None, None]
                gx = gx + (
                    -gfp * (sip / qip)[:, None, None]
                    - f_raw * (c1 / qip)[:, None, None]
                    + x * (2.0 * sip * c1 / qip**2)[:, None, None]
                )
            else:
                gf = gfp
            gx_net, dk, dh, db1, db2 = _net_vjp(theta, net_tape, gf)
            g_k += dk
            g_h += dh
            g_b1 += db1
            g_b2 += db2
            a = gx + gx_net

    grads = Gradients(g_k, g_h, g_b1, g_b2)
    if not grads.is_finite():
        raise DivergenceError("gradient is not finite")
    return loss_val, grads


def _prepare_batch(data: Dataset, indices, rollout_len: int, noise_eps: float, rng):
    if rollout_len > data.n_steps:
        raise ValueError(
            f"rollout length {rollout_len} exceeds the dataset's {data.n_steps} steps"
        )
    x0 = np.array(data.frames[indices, 0])
    targets = data.frames[indices, 1 : rollout_len + 1]
    if noise_eps > 0.0:
        if rng is None:
            raise ValueError("noise_eps > 0 requires an rng")
        x0 += rng.uniform(-noise_eps, noise_eps, size=x0.shape)
    return x0, targets


def loss(
    theta: TwoLayerNetParams,
    cfg: StepperConfig,
    data: Dataset,
    rollout_len: int,
    noise_eps: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean squared rollout error over all sequences; noise_eps=0 is the clean
    loss and never touches the rng."""
    x0, targets = _prepare_batch(data, slice(None), rollout_len, noise_eps, rng)
    pf, pn = _scheme_flags(cfg)
    val, _ = _rollout_loss_raw(
        theta, x0, targets, cfg.dt / cfg.substeps, cfg.substeps, pf, pn, want_grad=False
    )
    return val


def grad_loss(
    theta: TwoLayerNetParams,
    cfg: StepperConfig,
    data: Dataset,
    rollout_len: int,
    noise_eps: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, Gradients]:
    """Loss plus its exact reverse-mode gradient in every parameter."""
    x0, targets = _prepare_batch(data, slice(None), rollout_len, noise_eps, rng)
    pf, pn = _scheme_flags(cfg)
    return _rollout_loss_raw(
        theta, x0, targets, cfg.dt / cfg.substeps, cfg.substeps, pf, pn, want_grad=True
    )


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: Gradients
    v: Gradients
    t: int = 0


def init_adam_state(theta: TwoLayerNetParams) -> AdamState:
    return AdamState(Gradients.zeros_like(theta), Gradients.zeros_like(theta), 0)


def adam_step(
    theta: TwoLayerNetParams,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
) -> tuple[TwoLayerNetParams, AdamState]:
    """One bias-corrected Adam update; functional (returns new objects)."""
    t = state.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t

    def upd(p, g, m, v):
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * g * g
        p_new = p - lr * (m_new / c1) / (np.sqrt(v_new / c2) + eps_hat)
        return p_new, m_new, v_new

    k_w, mk, vk = upd(theta.k_bank.weights, grads.k_w, state.m.k_w, state.v.k_w)
    h_w, mh, vh = upd(theta.h_bank.weights, grads.h_w, state.m.h_w, state.v.h_w)
    b1, m1, v1 = upd(theta.b1, grads.b1, state.m.b1, state.v.b1)
    b2, m2, v2 = upd(np.float64(theta.b2), np.float64(grads.b2), np.float64(state.m.b2), np.float64(state.v.b2))
    new_theta = theta.with_weights(k_w, h_w, b1, float(b2))
    new_state = AdamState(
        Gradients(mk, mh, m1, float(m2)), Gradients(vk, vh, v1, float(v2)), t
    )
    return new_theta, new_state


def init_params(
    channels: int,
    ksize: int,
    activation: Activation,
    seed: int = 0,
    h_ksize: int | None = None,
    scale: float = 1.0,
) -> TwoLayerNetParams:
    """Random start: filters uniform in [-s, s] with s = scale/sqrt(C k^2)
    per bank, biases zero.

    For an even channel count the filters come in (+W, -W) / (+V, -V) pairs,
    the same antisymmetric layout the exact constructions use. At this start
    the relu/leaky network is exactly linear in its input, which makes the
    early optimization a benign two-layer linear-regression problem instead
    of first having to discover the pairing.
    """
    if h_ksize is None:
        h_ksize = ksize
    rng = np.random.default_rng(seed)
    s1 = scale / np.sqrt(channels * ksize**2)
    s2 = scale / np.sqrt(channels * h_ksize**2)
    if channels % 2 == 0:
        half = channels // 2
        w = rng.uniform(-s1, s1, size=(half, 1, ksize, ksize))
        v = rng.uniform(-s2, s2, size=(1, half, h_ksize, h_ksize))
        k_w = np.concatenate([w, -w], axis=0)
        h_w = np.concatenate([v, -v], axis=1)
    else:
        k_w = rng.uniform(-s1, s1, size=(channels, 1, ksize, ksize))
        h_w = rng.uniform(-s2, s2, size=(1, channels, h_ksize, h_ksize))
    return TwoLayerNetParams(
        FilterBank(k_w), FilterBank(h_w), np.zeros(channels), 0.0, activation
    )


# ---------------------------------------------------------------------------
# curriculum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryRow:
    stage: int
    epoch: int
    lr: float
    loss: float


def train_curriculum(
    theta0: TwoLayerNetParams,
    data: Dataset,
    cfg: TrainConfig,
    stepper: StepperConfig,
    noise_eps: float = 0.0,
    checkpoint_every: int | None = None,
    checkpoint_path=None,
) -> tuple[TwoLayerNetParams, list[HistoryRow]]:
    """Stage-wise training with growing rollout length and shrinking rate.

    Each stage runs ``epochs_per_stage`` epochs of shuffled mini-batch Adam at
    the stage's rollout length; within a stage the rate divides by
    ``lr_drop_factor`` at each epoch listed in ``lr_drop_epochs``, and each
    new stage starts at the previous stage's initial rate divided by
    ``stage_lr_halving``. History holds one row per epoch with the epoch-mean
    batch loss.
    """
    if max(cfg.stage_rollouts) > data.n_steps:
        raise ValueError(
            f"stage rollout {max(cfg.stage_rollouts)} exceeds dataset steps {data.n_steps}"
        )
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    noise_rng = np.random.default_rng(seeds[1])
    beta1, beta2, eps_hat = cfg.adam
    pf, pn = _scheme_flags(stepper)
    h = stepper.dt / stepper.substeps

    theta = theta0
    state = init_adam_state(theta0)
    history: list[HistoryRow] = []
    epochs_done = 0
    for stage, rollout_len in enumerate(cfg.stage_rollouts):
        lr = cfg.lr0 / cfg.stage_lr_halving**stage
        for epoch in range(cfg.epochs_per_stage):
            if epoch in cfg.lr_drop_epochs:
                lr /= cfg.lr_drop_factor
            order = shuffle_rng.permutation(data.n_sequences)
            batch_losses = []
            for start in range(0, data.n_sequences, cfg.batch_size):
                idx = np.sort(order[start : start + cfg.batch_size])
                x0, targets = _prepare_batch(data, idx, rollout_len, noise_eps, noise_rng)
                try:
                    val, grads = _rollout_loss_raw(
                        theta, x0, targets, h, stepper.substeps, pf, pn, want_grad=True
                    )
                except DivergenceError as exc:
                    # let the caller persist the last state that was still finite
                    exc.last_theta = theta
                    exc.history = history
                    raise
                theta, state = adam_step(theta, grads, state, lr, beta1, beta2, eps_hat)
                batch_losses.append(val)
            history.append(
                HistoryRow(stage=stage, epoch=epoch, lr=lr, loss=float(np.mean(batch_losses)))
            )
            epochs_done += 1
            if (
                checkpoint_every
                and checkpoint_path is not None
                and epochs_done % checkpoint_every == 0
            ):
                save_checkpoint(theta, checkpoint_path)
    return theta, history


def save_history_csv(history: list[HistoryRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "lr", "loss"])
        for row in history:
            writer.writerow([row.stage, row.epoch, repr(row.lr), repr(row.loss)])
