"""Second-order finite-difference stencils and semi-discrete right-hand sides.

Stencils are 3x3 coefficient matrices whose periodic correlation with nodal
values approximates a differential operator. The grid-spacing scaling is baked
into the coefficients at construction time, so application is always a plain
correlation. Orientation follows the field convention (rows = x, columns = y):
an x-derivative has its nonzeros down the center column.

A :class:`PDESpec` packages the linear stencil plus any quadratic interaction
terms, so the semi-discrete system reads

    du/dt = L*u + sum_i beta_i (Da_i*u) (Db_i*u)      (entry-wise product).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import Field, _as_f64_matrix, _conv_same_raw

__all__ = [
    "Stencil",
    "Interaction",
    "PDESpec",
    "identity_stencil",
    "laplacian_5pt",
    "d_dx",
    "d_dy",
    "d2_dx2",
    "d2_dy2",
    "d_dxdy",
    "eval_rhs",
    "advection_spec",
    "heat_spec",
    "fisher_spec",
    "pdespec_to_json",
    "pdespec_from_json",
]


@dataclass(frozen=True)
class Stencil:
    """A 3x3 finite-difference stencil, grid scaling included."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _as_f64_matrix(self.coeffs, "Stencil.coeffs")
        if c.shape != (3, 3):
            raise ValueError(f"Stencil must be 3x3, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("Stencil coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def __add__(self, other: "Stencil") -> "Stencil":
        return Stencil(self.coeffs + other.coeffs)

    def __mul__(self, scalar: float) -> "Stencil":
        return Stencil(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Stencil":
        return Stencil(-self.coeffs)

    def apply(self, u: Field) -> Field:
        return u.like(_conv_same_raw(u.data, self.coeffs))


@dataclass(frozen=True)
class Interaction:
    """One quadratic term beta * (d_a*u)(d_b*u)."""

    beta: float
    d_a: Stencil
    d_b: Stencil


@dataclass(frozen=True)
class PDESpec:
    """Linear stencil plus quadratic interactions defining the semi-discrete RHS."""

    linear: Stencil
    interactions: tuple[Interaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "interactions", tuple(self.interactions))

    @property
    def n_interactions(self) -> int:
        return len(self.interactions)


def _check_dx(dx: float):
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")


def identity_stencil() -> Stencil:
    """Center-one stencil; correlation with it is the identity map."""
    c = np.zeros((3, 3))
    c[1, 1] = 1.0
    return Stencil(c)


def laplacian_5pt(dx: float) -> Stencil:
    """Classic 5-point Laplacian, second-order accurate."""
    _check_dx(dx)
    c = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    return Stencil(c / dx**2)


def d_dx(dx: float) -> Stencil:
    """Centered first derivative along x (rows)."""
    _check_dx(dx)
    c = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return Stencil(c / (2.0 * dx))


def d_dy(dx: float) -> Stencil:
    """Centered first derivative along y (columns)."""
    _check_dx(dx)
    c = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    return Stencil(c / (2.0 * dx))


def d2_dx2(dx: float) -> Stencil:
    """Centered second derivative along x."""
    _check_dx(dx)
    c = np.array([[0.0, 1.0, 0.0], [0.0, -2.0, 0.0], [0.0, 1.0, 0.0]])
    return Stencil(c / dx**2)


def d2_dy2(dx: float) -> Stencil:
    """Centered second derivative along y."""
    _check_dx(dx)
    c = np.array([[0.0, 0.0, 0.0], [1.0, -2.0, 1.0], [0.0, 0.0, 0.0]])
    return Stencil(c / dx**2)


def d_dxdy(dx: float) -> Stencil:
    """Mixed second derivative, 4-corner cross formula."""
    _check_dx(dx)
    c = np.array([[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]])
    return Stencil(c / (4.0 * dx**2))


def eval_rhs(spec: PDESpec, u: Field) -> Field:
    """Evaluate the semi-discrete right-hand side at ``u``."""
    out = _conv_same_raw(u.data, spec.linear.coeffs)
    for term in spec.interactions:
        a = _conv_same_raw(u.data, term.d_a.coeffs)
        b = _conv_same_raw(u.data, term.d_b.coeffs)
        out = out + term.beta * (a * b)
    return u.like(out)


def advection_spec(b1: float, b2: float, dx: float) -> PDESpec:
    """Linear advection du/dt = b1 u_x + b2 u_y."""
    _check_dx(dx)
    return PDESpec(linear=b1 * d_dx(dx) + b2 * d_dy(dx))


def heat_spec(alpha: float, dx: float) -> PDESpec:
    """Heat equation du/dt = alpha * Laplace(u)."""
    _check_dx(dx)
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return PDESpec(linear=alpha * laplacian_5pt(dx))


def fisher_spec(alpha: float, dx: float) -> PDESpec:
    """Reaction-diffusion du/dt = alpha * Laplace(u) + u(1-u).

    The logistic reaction is kept inside the quadratic-interaction form: the
    identity stencil joins the linear part (the +u term) and one interaction
    with beta=-1 and identity operators supplies the -u^2 term.
    """
    _check_dx(dx)
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    ident = identity_stencil()
    linear = alpha * laplacian_5pt(dx) + ident
    return PDESpec(linear=linear, interactions=(Interaction(-1.0, ident, ident),))


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def pdespec_to_json(spec: PDESpec, dx: float) -> str:
    """Serialize a PDESpec (with the grid spacing it was built for) to JSON."""
    doc = {
        "linear": spec.linear.coeffs.ravel().tolist(),
        "interactions": [
            {
                "beta": term.beta,
                "d_a": term.d_a.coeffs.ravel().tolist(),
                "d_b": term.d_b.coeffs.ravel().tolist(),
            }
            for term in spec.interactions
        ],
        "dx": dx,
    }
    return json.dumps(doc, indent=2)


def pdespec_from_json(text: str) -> tuple[PDESpec, float]:
    doc = json.loads(text)
    linear = Stencil(np.asarray(doc["linear"], dtype=np.float64).reshape(3, 3))
    interactions = tuple(
        Interaction(
            float(t["beta"]),
            Stencil(np.asarray(t["d_a"], dtype=np.float64).reshape(3, 3)),
            Stencil(np.asarray(t["d_b"], dtype=np.float64).reshape(3, 3)),
        )
        for t in doc["interactions"]
    )
    return PDESpec(linear=linear, interactions=interactions), float(doc["dx"])
