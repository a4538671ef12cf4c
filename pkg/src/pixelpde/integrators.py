"""One-step maps built from a vector field: plain and norm-preserving Euler.

A vector field is any callable Field -> Field (an exact semi-discrete RHS, a
network, or the tangent-projected wrapper around either). A full step of size
dt is the k-fold composition of the chosen substep scheme with step dt/k; for
the norm-preserving scheme, the rescaling onto the norm sphere happens in every
substep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .errors import DegenerateInputError, DivergenceError
from .fields import Field, frobenius_norm
from .network import TwoLayerNetParams, eval_net
from .stencils import PDESpec, eval_rhs

VectorField = Callable[[Field], Field]

__all__ = [
    "VectorField",
    "StepperConfig",
    "SCHEMES",
    "euler_step",
    "project_tangent",
    "tangent_projected_field",
    "network_vector_field",
    "norm_projected_euler_step",
    "step",
    "rollout",
    "DiagnosticReport",
    "local_error_diagnostic",
    "rk4_flow",
]

SCHEMES = ("euler", "norm_projected_euler")


@dataclass(frozen=True)
class StepperConfig:
    """Step size dt, number of substeps, and the substep scheme."""

    dt: float
    substeps: int = 1
    scheme: str = "euler"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")


def euler_step(f: VectorField, u: Field, h: float) -> Field:
    """Explicit Euler: u + h f(u)."""
    if not np.isfinite(h):
        raise ValueError(f"step size must be finite, got {h}")
    return u.like(u.data + h * f(u).data)


def project_tangent(u: Field, v: Field) -> Field:
    """Remove from v its component along u (orthogonal w.r.t. the Frobenius
    inner product), so the result is tangent to the norm sphere through u."""
    q = float(np.sum(u.data * u.data))
    if q == 0.0:
        raise DegenerateInputError("cannot project onto the tangent space at a zero field")
    s = float(np.sum(u.data * v.data))
    return u.like(v.data - u.data * (s / q))


def tangent_projected_field(f: VectorField) -> VectorField:
    """Wrap f so its flow preserves the Frobenius norm of the state."""

    def projected(u: Field) -> Field:
        return project_tangent(u, f(u))

    return projected


def network_vector_field(theta: TwoLayerNetParams, scheme: str = "euler") -> VectorField:
    """The field a trained model integrates: the raw network for the plain
    scheme, its tangent-projected wrapper for the norm-preserving one."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    raw: VectorField = lambda u: eval_net(theta, u)
    if scheme == "norm_projected_euler":
        return tangent_projected_field(raw)
    return raw


def norm_projected_euler_step(f: VectorField, u: Field, h: float) -> Field:
    """Euler step rescaled back onto the norm sphere of the current state.

    With h=0 the rescaling factor is exactly 1 and the state is returned
    unchanged.
    """
    if not np.isfinite(h):
        raise ValueError(f"step size must be finite, got {h}")
    v = u.data + h * f(u).data
    norm_u = frobenius_norm(u.data)
    norm_v = frobenius_norm(v)
    if norm_v == 0.0:
        raise DegenerateInputError("norm projection hit a zero-norm intermediate state")
    return u.like(v * (norm_u / norm_v))


def step(cfg: StepperConfig, f: VectorField, u: Field) -> Field:
    """One full step: k substeps of size dt/k with the configured scheme."""
    h = cfg.dt / cfg.substeps
    out = u
    if cfg.scheme == "euler":
        for _ in range(cfg.substeps):
            out = euler_step(f, out, h)
    else:
        for _ in range(cfg.substeps):
            out = norm_projected_euler_step(f, out, h)
    return out


def rollout(cfg: StepperConfig, f: VectorField, u0: Field, m: int) -> List[Field]:
    """Iterate :func:`step` m times, returning all m produced frames."""
    if m < 1:
        raise ValueError(f"rollout length must be positive, got {m}")
    frames = []
    u = u0
    for i in range(1, m + 1):
        u = step(cfg, f, u)
        if not np.all(np.isfinite(u.data)):
            raise DivergenceError(f"non-finite values at rollout step {i}", step=i)
        frames.append(u)
    return frames


# ---------------------------------------------------------------------------
# error diagnostics
# ---------------------------------------------------------------------------


def rk4_flow(f: VectorField, u0: Field, t: float, n_steps: int) -> List[Field]:
    """Classic RK4 with n_steps substeps over [0, t]; proxy for the exact flow."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    h = t / n_steps
    frames = []
    u = u0.data
    like = u0.like
    for i in range(1, n_steps + 1):
        k1 = f(like(u)).data
        k2 = f(like(u + 0.5 * h * k1)).data
        k3 = f(like(u + 0.5 * h * k2)).data
        k4 = f(like(u + h * k3)).data
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"flow proxy diverged at substep {i}", step=i)
        frames.append(like(u))
    return frames


@dataclass(frozen=True)
class DiagnosticReport:
    """Local one-step error split into flow error and field mismatch."""

    dt: float
    substeps: int
    flow_error: float
    vf_mismatch_sup: float
    lipschitz_estimate: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "dt": self.dt,
                "k": self.substeps,
                "flow_error": self.flow_error,
                "vf_mismatch_sup": self.vf_mismatch_sup,
                "lipschitz_estimate": self.lipschitz_estimate,
            },
            indent=1,
        )


def local_error_diagnostic(
    spec: PDESpec,
    theta: TwoLayerNetParams,
    cfg: StepperConfig,
    u0: Field,
    exact_proxy_steps: int = 100,
    dt: float | None = None,
    rng: np.random.Generator | None = None,
) -> DiagnosticReport:
    """Compare one network step against a high-accuracy flow of the exact RHS.

    Reports the one-step error ||flow(dt, u0) - step(dt, u0)||_F with the flow
    proxied by RK4 on ``spec`` using ``exact_proxy_steps`` substeps, the
    largest field mismatch max ||F(V) - F_theta(V)||_F over states sampled
    along the flow and around u0, and an empirical Lipschitz constant of F
    from sampled state pairs. ``dt`` overrides cfg.dt (dt=0 is allowed and
    gives zero flow error).
    """
    if exact_proxy_steps < 100:
        raise ValueError(f"exact_proxy_steps must be >= 100, got {exact_proxy_steps}")
    if dt is None:
        dt = cfg.dt
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if rng is None:
        rng = np.random.default_rng(0x9D1A6)

    exact_f: VectorField = lambda u: eval_rhs(spec, u)
    net_f: VectorField = lambda u: eval_net(theta, u)

    if dt == 0.0:
        flow_end = u0
        proxy_frames = [u0]
        net_end = u0
    else:
        proxy_frames = rk4_flow(exact_f, u0, dt, exact_proxy_steps)
        flow_end = proxy_frames[-1]
        sub_cfg = StepperConfig(dt=dt, substeps=cfg.substeps, scheme=cfg.scheme)
        net_end = step(sub_cfg, net_f, u0)
    flow_error = frobenius_norm(flow_end.data - net_end.data)

    # states visited by the flow plus jittered copies of the start state
    samples = [u0] + [proxy_frames[i] for i in _spread_indices(len(proxy_frames), 7)]
    scale = 0.05 * (np.max(np.abs(u0.data)) + 1.0)
    for _ in range(4):
        samples.append(u0.like(u0.data + rng.uniform(-scale, scale, size=u0.data.shape)))

    mismatch = 0.0
    f_vals = []
    for v in samples:
        fv = exact_f(v)
        f_vals.append(fv)
        mismatch = max(mismatch, frobenius_norm(fv.data - net_f(v).data))

    lip = 0.0
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            dist = frobenius_norm(samples[i].data - samples[j].data)
            if dist > 1e-12:
                lip = max(lip, frobenius_norm(f_vals[i].data - f_vals[j].data) / dist)

    return DiagnosticReport(
        dt=float(dt),
        substeps=cfg.substeps,
        flow_error=flow_error,
        vf_mismatch_sup=mismatch,
        lipschitz_estimate=lip,
    )


def _spread_indices(n: int, count: int) -> list[int]:
    if n <= count:
        return list(range(n))
    return sorted({int(round(i * (n - 1) / (count - 1))) for i in range(count)})
