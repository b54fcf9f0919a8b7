"""Geometry of conformally twisted products over periodic factors.

The ambient manifold is a product M1 x M2 of a flat base (dimension n)
and a flat fiber (dimension p), carrying the metric

    g = exp(2*phi) g1 (+) exp(2*psi) g2,

with g1, g2 the flat factor metrics.  The tangent distribution D = TM1
is spanned by the base directions and D_perp = TM2 by the fiber
directions; phi may depend on both coordinates, psi is frozen in time.

Closed-form consequences of that ansatz, all obtained from the Koszul
formula on coordinate fields:

  * the leaves M1 x {y} are umbilical, b = -(grad_perp phi) ghat, so the
    mean curvature (trace of b over the n base directions) is
    H = -n grad_perp phi;
  * the fibers {x} x M2 are umbilical with H_perp = -p ghat-grad of psi;
  * grad_perp u = exp(-2*psi) * (flat fiber partials of u);
  * Div_perp xi = sum_i d_i xi^i + p * sum_i (d_i psi) xi^i;
  * Lap_perp u = Div_perp(grad_perp u), which for constant psi reduces to
    exp(-2*psi) times the flat fiber Laplacian.

All fields are nodal arrays over the combined base x fiber grid, with the
fiber axes trailing so the fiber-spectral helpers apply directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fiber as fb
from .errors import InputError
from .fiber import FiberGrid

# Fiber variation of psi below this (relative) threshold counts as
# fiber-constant, which is what the exact spectral flow path requires.
PSI_CONSTANT_TOL = 1e-13


@dataclass(frozen=True)
class ProductState:
    """Snapshot of a twisted-product metric at one time.

    phi and psi live on the combined grid (base axes first).  Treat the
    arrays as immutable once the state is built.
    """

    base: FiberGrid
    fiber: FiberGrid
    phi: np.ndarray
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        shape = self.base.shape + self.fiber.shape
        phi = np.asarray(self.phi, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if np.isscalar(self.psi) or psi.ndim == 0:
            psi = np.full(shape, float(psi))
        if phi.shape != shape or psi.shape != shape:
            raise InputError(
                f"phi/psi shapes {phi.shape}, {psi.shape} do not match grid shape {shape}"
            )
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
            raise InputError("phi and psi must be finite")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def n(self) -> int:
        return self.base.dim

    @property
    def p(self) -> int:
        return self.fiber.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.base.shape + self.fiber.shape

    @property
    def fiber_axes(self) -> tuple[int, ...]:
        return tuple(range(self.n, self.n + self.p))

    @classmethod
    def from_harmonics(cls, base: FiberGrid, fiber_grid: FiberGrid,
                       phi_terms: dict | None = None,
                       psi_terms: dict | None = None,
                       t: float = 0.0) -> "ProductState":
        """Build a state from {mode: (cos amp, sin amp)} maps over base x fiber."""
        shape = base.shape + fiber_grid.shape
        phi = fb.harmonic_field((base, fiber_grid), phi_terms or {})
        psi = fb.harmonic_field((base, fiber_grid), psi_terms or {})
        phi = np.broadcast_to(phi, shape).copy() if phi.shape != shape else phi
        psi = np.broadcast_to(psi, shape).copy() if psi.shape != shape else psi
        return cls(base, fiber_grid, phi, psi, t)

    def replace_phi(self, phi: np.ndarray, t: float) -> "ProductState":
        return ProductState(self.base, self.fiber, phi, self.psi, t)


def psi_fiber_mean(state: ProductState) -> np.ndarray:
    """Per-fiber average of psi, shape = base.shape."""
    return state.psi.mean(axis=state.fiber_axes)


def psi_is_fiber_constant(state: ProductState) -> bool:
    """True when psi does not vary along any single fiber (to round-off).

    This is the condition for the leaf Laplacian to be a scaled flat
    Laplacian, hence for the exact spectral evolution path.
    """
    spread = state.psi.max(axis=state.fiber_axes) - state.psi.min(axis=state.fiber_axes)
    scale = max(1.0, float(np.max(np.abs(state.psi))))
    return float(np.max(spread)) <= PSI_CONSTANT_TOL * scale


def _check_fiber_vector(xi: np.ndarray, state: ProductState) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (state.p,) + state.shape:
        raise InputError(
            f"fiber vector field shape {xi.shape} != {(state.p,) + state.shape}"
        )
    return xi


def grad_perp(u: np.ndarray, state: ProductState) -> np.ndarray:
    """Leafwise gradient of u: exp(-2*psi) times the flat fiber partials."""
    flat = fb.gradient_values(np.asarray(u, dtype=float), state.fiber)
    return np.exp(-2.0 * state.psi) * flat


def div_perp(xi: np.ndarray, state: ProductState) -> np.ndarray:
    """Leafwise divergence of a fiber-tangent vector field.

    With the leaf metric exp(2*psi) g2 this is sum_i d_i xi^i plus the
    conformal correction p * sum_i (d_i psi) xi^i.
    """
    xi = _check_fiber_vector(xi, state)
    psi_grad = fb.gradient_values(state.psi, state.fiber)
    out = np.zeros(state.shape)
    for k in range(state.p):
        out += fb.gradient_values(xi[k], state.fiber)[k]
        out += state.p * psi_grad[k] * xi[k]
    return out


def laplacian_perp(u: np.ndarray, state: ProductState) -> np.ndarray:
    """Leafwise Laplace operator, Div_perp of grad_perp."""
    return div_perp(grad_perp(u, state), state)


def base_gradient(u: np.ndarray, state: ProductState) -> np.ndarray:
    """Flat spectral partials along the base axes, shape (n,) + state.shape."""
    n, p = state.n, state.p
    moved = np.moveaxis(np.asarray(u, dtype=float), tuple(range(n)), tuple(range(p, p + n)))
    grads = fb.gradient_values(moved, state.base)
    return np.stack(
        [np.moveaxis(grads[k], tuple(range(p, p + n)), tuple(range(n))) for k in range(n)]
    )


def twisted_mean_curvature(state: ProductState) -> np.ndarray:
    """Mean curvature of the leaves, as fiber-coordinate components.

    The trace of the umbilical second fundamental form over the n base
    directions gives H = -n grad_perp phi; each of the n unit base
    directions contributes one copy of -grad_perp phi.
    """
    return -state.n * grad_perp(state.phi, state)


@dataclass(frozen=True)
class SecondFundamentalData:
    """Second fundamental data of both distributions of a product state.

    The leaves are umbilical, so b is recorded as the proportionality
    b = (H/n) ghat plus a residual coefficient field (identically zero for
    every in-scope scenario, kept explicit so checks can watch it).  Both
    coefficient fields are vector components w.r.t. the relevant factor's
    coordinates: h over the fiber, hperp over the base.
    """

    h: np.ndarray               # (p,) + shape
    b_residual: np.ndarray      # (p,) + shape
    hperp: np.ndarray           # (n,) + shape
    bperp_residual: np.ndarray  # (n,) + shape

    @property
    def b_coeff(self) -> np.ndarray:
        """Coefficient field beta with b = beta . ghat (umbilical record)."""
        n = self.hperp.shape[0]
        return self.h / n + self.b_residual

    @property
    def bperp_coeff(self) -> np.ndarray:
        p = self.h.shape[0]
        return self.hperp / p + self.bperp_residual


def second_fundamental(state: ProductState) -> SecondFundamentalData:
    """Closed-form second fundamental data of the twisted product."""
    h = twisted_mean_curvature(state)
    hperp = -state.p * np.exp(-2.0 * state.phi) * base_gradient(state.psi, state)
    return SecondFundamentalData(
        h=h,
        b_residual=np.zeros_like(h),
        hperp=hperp,
        bperp_residual=np.zeros_like(hperp),
    )


def conformal_change(b_coeff: np.ndarray, h: np.ndarray, phi_inc: np.ndarray,
                     state: ProductState) -> tuple[np.ndarray, np.ndarray]:
    """Second fundamental data after ghat -> exp(2*phi_inc) ghat.

    In the coefficient representation (tensors written as a fiber vector
    times the current truncated metric) the change is

        b~ = (beta - grad_perp phi_inc) . ghat~,   H~ = H - n grad_perp phi_inc,

    so a fiber-constant increment leaves both coefficient fields alone:
    the rescaling then lives entirely in ghat~ = exp(2*phi_inc) ghat and
    the mean curvature is untouched.
    """
    b_coeff = np.asarray(b_coeff, dtype=float)
    h = _check_fiber_vector(h, state)
    if b_coeff.shape != h.shape:
        raise InputError(f"b coefficient shape {b_coeff.shape} != H shape {h.shape}")
    g = grad_perp(np.broadcast_to(np.asarray(phi_inc, dtype=float), state.shape), state)
    return b_coeff - g, h - state.n * g


def volume_form_weight(state: ProductState) -> np.ndarray:
    """Density of dvol against the flat reference: exp(n*phi + p*psi)."""
    return np.exp(state.n * state.phi + state.p * state.psi)


def integrate(state: ProductState, values: np.ndarray) -> float:
    """Quadrature of a scalar field against dvol.

    On a uniform periodic grid the trapezoidal rule collapses to the mean
    times the flat volume and is spectrally accurate for smooth fields.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != state.shape:
        raise InputError(f"integrand shape {values.shape} != state shape {state.shape}")
    flat_vol = state.base.volume * state.fiber.volume
    return float(np.mean(values * volume_form_weight(state)) * flat_vol)


def volume(state: ProductState) -> float:
    """Total Riemannian volume of the product."""
    return integrate(state, np.ones(state.shape))


def fiber_integrate(state: ProductState, values: np.ndarray) -> np.ndarray:
    """Per-fiber quadrature against the leaf volume exp(p*psi) dy."""
    values = np.asarray(values, dtype=float)
    weight = np.exp(state.p * state.psi)
    return (values * weight).mean(axis=state.fiber_axes) * state.fiber.volume


def fiber_average(state: ProductState, values: np.ndarray) -> np.ndarray:
    """Leaf-volume-weighted per-fiber average, shape = base.shape."""
    return fiber_integrate(state, values) / fiber_integrate(state, np.ones(state.shape))


def h_norm_sup(state: ProductState, h: np.ndarray) -> float:
    """Sup over the grid of the metric norm of a fiber-tangent field."""
    h = _check_fiber_vector(h, state)
    sq = np.exp(2.0 * state.psi) * np.sum(h ** 2, axis=0)
    return float(np.sqrt(np.max(sq)))


def hperp_norm_sup(state: ProductState, hperp: np.ndarray) -> float:
    """Sup of the metric norm of a base-tangent field."""
    hperp = np.asarray(hperp, dtype=float)
    sq = np.exp(2.0 * state.phi) * np.sum(hperp ** 2, axis=0)
    return float(np.sqrt(np.max(sq)))


def theta_h(state: ProductState, h: np.ndarray | None = None) -> np.ndarray:
    """Covariant components of the mean-curvature 1-form, theta_i = g_perp(H, .).

    For the twisted ansatz these are -n * (flat fiber partials of phi), so
    the form is exactly closed.
    """
    if h is None:
        h = twisted_mean_curvature(state)
    return np.exp(2.0 * state.psi) * _check_fiber_vector(h, state)


def d_theta_sup(state: ProductState, h: np.ndarray | None = None) -> float:
    """Sup norm of d_perp of the mean-curvature 1-form (0 when p = 1)."""
    if state.p == 1:
        return 0.0
    theta = theta_h(state, h)
    d1 = fb.gradient_values(theta[1], state.fiber)[0]
    d2 = fb.gradient_values(theta[0], state.fiber)[1]
    return float(np.max(np.abs(d1 - d2)))


@dataclass(frozen=True)
class DistributionFlags:
    """Pointwise-uniform classification of one distribution."""

    umbilical: bool
    harmonic: bool

    @property
    def totally_geodesic(self) -> bool:
        return self.umbilical and self.harmonic

    @property
    def label(self) -> str:
        if self.totally_geodesic:
            return "totally_geodesic"
        if self.umbilical:
            return "umbilical"
        if self.harmonic:
            return "harmonic"
        return "none"


@dataclass(frozen=True)
class ClassificationReport:
    tangent: DistributionFlags      # the leaf distribution D
    normal: DistributionFlags       # D_perp
    umbilical_residual: float       # sup |b - (H/n) ghat| coefficient norm
    normal_residual: float

    def as_tuple(self) -> tuple[str, str]:
        return self.tangent.label, self.normal.label


def classify(state: ProductState, tol: float = 1e-10,
             data: SecondFundamentalData | None = None) -> ClassificationReport:
    """Flag each distribution as umbilical / harmonic / totally geodesic.

    Umbilicity is judged by the sup metric norm of the traceless residual
    b - (H/n) ghat (exactly zero for the conformal product ansatz) and
    harmonicity by sup |H| < tol.  Totally geodesic is the conjunction.
    """
    if data is None:
        data = second_fundamental(state)
    res_d = h_norm_sup(state, data.b_residual)
    res_n = hperp_norm_sup(state, data.bperp_residual)
    tangent = DistributionFlags(
        umbilical=res_d <= tol,
        harmonic=h_norm_sup(state, data.h) <= tol,
    )
    normal = DistributionFlags(
        umbilical=res_n <= tol,
        harmonic=hperp_norm_sup(state, data.hperp) <= tol,
    )
    return ClassificationReport(tangent, normal, res_d, res_n)
