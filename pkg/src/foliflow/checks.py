"""Runtime checkers for the integral identities and preservation laws.

Every checker returns CheckReport records (name, residual, tolerance,
sample time) so runs can be audited mechanically.  Checkers are pure:
they never mutate the trajectory and are idempotent, and the reports
are independent of evaluation order.

Default tolerances: 1e-8 for spectral-path identities at 64 points per
dimension, 1e-3 for comparisons against the finite-difference oracle,
and looser scheme-specific values where a finite-difference step enters
(each report carries its own tolerance so failures are attributable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import fiber as fb
from . import geometry as geo
from .errors import DegenerateTrajectoryError, InputError, UnsupportedScenarioError
from .fdref import FdScheme, fd_heat_run
from .fiber import FiberGrid
from .flows import Trajectory, _broadcast_x
from .geometry import ProductState

SPECTRAL_TOL = 1e-8
PRESERVE_TOL = 1e-10
MONOTONE_TOL = 1e-6
VOLUME_ODE_TOL = 1e-4
ORACLE_TOL = 1e-3
ORDER_TOL = 0.2
DECAY_REL_TOL = 0.02


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one identity check at one sample time."""

    name: str
    residual: float
    tolerance: float
    sample_time: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"{self.name}[t={self.sample_time:g}]: residual {self.residual:.3e} "
                f"vs {self.tolerance:.1e} ({verdict})")


def _pair_h_xi(state: ProductState, xi: np.ndarray | None):
    h = geo.twisted_mean_curvature(state)
    if xi is None:
        xi = h
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != h.shape:
            raise InputError(f"xi shape {xi.shape} != {(state.p,) + state.shape}")
    return h, xi


def divergence_identity_sides(state: ProductState,
                              xi: np.ndarray | None = None) -> tuple[float, float]:
    """(int Div_perp xi dvol, int g(H, xi) dvol); xi defaults to H itself."""
    h, xi = _pair_h_xi(state, xi)
    lhs = geo.integrate(state, geo.div_perp(xi, state))
    pairing = np.exp(2.0 * state.psi) * np.sum(h * xi, axis=0)
    rhs = geo.integrate(state, pairing)
    return lhs, rhs


def check_divergence_identity(state: ProductState, xi: np.ndarray | None = None,
                              tolerance: float = SPECTRAL_TOL) -> CheckReport:
    """Integrated adjointness of Div_perp against the mean curvature.

    For any fiber-tangent field xi on a closed product,
    int Div_perp(xi) dvol = int g(H, xi) dvol; with xi = H both sides are
    int |H|^2 dvol >= 0, which also certifies r(t) <= 0.
    """
    lhs, rhs = divergence_identity_sides(state, xi)
    return CheckReport("divergence_identity", abs(lhs - rhs), tolerance, state.t)


def codim1_tau(state: ProductState) -> np.ndarray:
    """Leafwise mean-curvature scalar g(N, H) for one-dimensional fibers."""
    if state.p != 1:
        raise InputError("tau needs one-dimensional fibers")
    return np.exp(state.psi) * geo.twisted_mean_curvature(state)[0]


def check_codim1_identity(state: ProductState, f: np.ndarray | None = None,
                          tolerance: float = SPECTRAL_TOL) -> CheckReport:
    """int N(f) dvol = int tau f dvol along the unit fiber normal N.

    f = 1 gives the vanishing of the total mean curvature of the flow
    lines, the classical obstruction to taut circle foliations.
    """
    if state.p != 1:
        raise InputError("the codimension-one identity needs p = 1")
    if f is None:
        f = np.ones(state.shape)
    f = np.asarray(f, dtype=float)
    if f.shape != state.shape:
        raise InputError(f"f shape {f.shape} != state shape {state.shape}")
    n_of_f = np.exp(-state.psi) * fb.gradient_values(f, state.fiber)[0]
    residual = abs(geo.integrate(state, n_of_f - codim1_tau(state) * f))
    return CheckReport("codim1_identity", residual, tolerance, state.t)


def check_harmonic_function_rigidity(state: ProductState, f: np.ndarray,
                                     tolerance: float = SPECTRAL_TOL) -> CheckReport:
    """Pointwise Bochner-type identity behind leafwise-harmonic rigidity.

        Div(f grad_perp f) + f (H(f) - Lap_perp f) = |grad_perp f|^2,

    where Div is the full-metric divergence.  Integrating kills the Div
    term, so Lap_perp f = H(f) forces grad_perp f = 0: leafwise harmonic
    functions compatible with the mean curvature are leafwise constant.
    The residual is the sup-norm of the displayed identity.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != state.shape:
        raise InputError(f"f shape {f.shape} != state shape {state.shape}")
    grad = geo.grad_perp(f, state)
    zeta = f * grad
    weight = geo.volume_form_weight(state)
    div_full = sum(
        fb.gradient_values(weight * zeta[i], state.fiber)[i] for i in range(state.p)
    ) / weight
    h = geo.twisted_mean_curvature(state)
    h_of_f = np.zeros(state.shape)
    partials = fb.gradient_values(f, state.fiber)
    for i in range(state.p):
        h_of_f += h[i] * partials[i]
    lap = geo.laplacian_perp(f, state)
    grad_sq = np.exp(2.0 * state.psi) * np.sum(grad ** 2, axis=0)
    residual = float(np.max(np.abs(div_full + f * (h_of_f - lap) - grad_sq)))
    return CheckReport("harmonic_rigidity", residual, tolerance, state.t)


def check_preservation(trajectory: Trajectory,
                       tolerance: float = PRESERVE_TOL) -> list[CheckReport]:
    """Structure preservation along a run, one report per property per sample.

    Checks that leaf-tangent umbilicity persists, that the mean-curvature
    1-form stays closed, and that the fiber distribution keeps whichever
    of the umbilical/harmonic/totally geodesic labels it started with.
    """
    if len(trajectory.states) < 3:
        raise InputError("preservation checks need at least 3 sampled states")
    reports = []
    first = trajectory.diagnostics[0]
    for record in trajectory.diagnostics:
        reports.append(CheckReport("umbilical", record.umbilical_residual,
                                   tolerance, record.t))
        reports.append(CheckReport("closed_theta", record.d_theta_sup,
                                   tolerance, record.t))
        drift = 0.0 if record.normal_label == first.normal_label else 1.0
        reports.append(CheckReport("normal_flags", drift, 0.5, record.t))
    return reports


def _driving_theta(state: ProductState, x: np.ndarray) -> np.ndarray:
    h = geo.twisted_mean_curvature(state)
    return np.exp(2.0 * state.psi) * (h - x)


def _theta_norms(state: ProductState, x: np.ndarray) -> tuple[float, float]:
    """(|theta|^2, |delta_perp theta|^2) in the leafwise L2 norm.

    The leaf measure exp(p psi) dy and the leaf metric are frozen in
    time, so these norms see only the evolving 1-form.
    """
    theta = _driving_theta(state, x)
    leaf_weight = np.exp(state.p * state.psi)
    flat_vol = state.base.volume * state.fiber.volume
    theta_sq = np.exp(-2.0 * state.psi) * np.sum(theta ** 2, axis=0)
    sharp = np.exp(-2.0 * state.psi) * theta
    codiff = -geo.div_perp(sharp, state)
    return (
        float(np.mean(theta_sq * leaf_weight) * flat_vol),
        float(np.mean(codiff ** 2 * leaf_weight) * flat_vol),
    )


def check_monotonicity(trajectory: Trajectory, h: float = 1e-4,
                       tolerance: float = MONOTONE_TOL) -> list[CheckReport]:
    """d/dt |theta_H|_2^2 = -2 |delta_perp theta_H|_2^2, sample by sample.

    The time derivative is a second-order finite difference of the exact
    evaluator (one-sided at t = 0), the codifferential term is evaluated
    at the sample itself.
    """
    x = _broadcast_x(trajectory.config.x_field, trajectory.initial)

    def energy(t: float) -> float:
        return _theta_norms(trajectory.evaluate(t), x)[0]

    reports = []
    for record in trajectory.diagnostics:
        t = record.t
        if t >= h:
            slope = (energy(t + h) - energy(t - h)) / (2.0 * h)
        else:
            slope = (-3.0 * energy(t) + 4.0 * energy(t + h) - energy(t + 2 * h)) / (2.0 * h)
        dissip = _theta_norms(trajectory.evaluate(t), x)[1]
        reports.append(CheckReport("monotonicity", abs(slope + 2.0 * dissip),
                                   tolerance, t))
    return reports


def check_volume_ode(trajectory: Trajectory, t: float | None = None,
                     spacing: float = 1e-3,
                     tolerance: float = VOLUME_ODE_TOL) -> CheckReport:
    """d/dt vol(g_t) = (n/2) int s_t dvol_t by central differences.

    s_t is the conformal speed of the evolving leaf factor; for the
    normalized variant it includes the -r(t) correction and both sides
    vanish.  The residual is relative when the analytic side is nonzero.
    """
    config = trajectory.config
    if t is None:
        t = trajectory.sample_times[len(trajectory.sample_times) // 2]
        t = min(max(t, spacing), config.t_end - spacing)
    state = trajectory.evaluate(t)
    x = _broadcast_x(config.x_field, trajectory.initial)
    driving = geo.div_perp(geo.twisted_mean_curvature(state) - x, state)
    s = -(2.0 / state.n) * driving
    if config.variant == "normalized":
        from .flows import normalization_rate

        s = s - normalization_rate(state)
    rhs = (state.n / 2.0) * geo.integrate(state, s)
    lhs = (geo.volume(trajectory.evaluate(t + spacing))
           - geo.volume(trajectory.evaluate(t - spacing))) / (2.0 * spacing)
    scale = abs(rhs) if abs(rhs) > 1e-12 else 1.0
    return CheckReport("volume_ode", abs(lhs - rhs) / scale, tolerance, t)


def check_bperp_scaling(trajectory: Trajectory, t: float | None = None,
                        quad_nodes: int = 513,
                        tolerance: float = SPECTRAL_TOL) -> CheckReport:
    """Pointwise scaling of the base-distribution shape coefficient.

    The fiber-normal second fundamental form keeps its direction and
    scales by exp(-int_0^t s), i.e. by exp((2/n) int_0^t Div_perp(H - X))
    with the -r correction under the normalized variant.  The exponent
    is recomputed here by Simpson quadrature over sampled states, fully
    independent of the engine's closed-form reconstruction.
    """
    config = trajectory.config
    if t is None:
        t = config.t_end
    if t <= 0:
        raise InputError("bperp scaling needs t > 0")
    x = _broadcast_x(config.x_field, trajectory.initial)
    nodes = np.linspace(0.0, t, quad_nodes)
    normalized = config.variant == "normalized"
    if normalized:
        from .flows import normalization_rate

    speeds = []
    for tau in nodes:
        s_state = trajectory.evaluate(float(tau))
        driving = geo.div_perp(geo.twisted_mean_curvature(s_state) - x, s_state)
        s_val = -(2.0 / s_state.n) * driving
        if normalized:
            s_val = s_val - normalization_rate(s_state)
        speeds.append(s_val)
    exponent = -simpson(np.stack(speeds), x=nodes, axis=0)

    start = trajectory.evaluate(0.0)
    end = trajectory.evaluate(t)
    b0 = geo.second_fundamental(start).bperp_coeff
    bt = geo.second_fundamental(end).bperp_coeff
    residual = float(np.max(np.abs(bt - b0 * np.exp(exponent)[None])))
    return CheckReport("bperp_scaling", residual, tolerance, t)


def flat_spectral_gap(grid: FiberGrid) -> float:
    """Smallest nonzero Laplace eigenvalue of the flat fiber torus."""
    return min((2.0 * math.pi / L) ** 2 for L in grid.sides)


def uniform_equivalence_constant(trajectory: Trajectory) -> float:
    """Certificate c >= 1 with c^{-1} ghat_0 <= ghat_t <= c ghat_0 for all t.

    The conformal exponent is 2(phi_t - phi_0) = -(2/n) * running time
    integral of the driving scalar, bounded per fiber by the summed
    nonzero-mode amplitudes of the initial scalar over the effective
    spectral gap (for single-mode data this is exactly max amplitude
    over the gap).  Exact-path trajectories only: the bound uses the
    fiber-constant conformal spectrum.
    """
    if not trajectory.exact_path:
        raise UnsupportedScenarioError(
            "the spectral certificate needs a fiber-constant psi"
        )
    initial = trajectory.initial
    x = _broadcast_x(trajectory.config.x_field, initial)
    driving0 = geo.div_perp(geo.twisted_mean_curvature(initial) - x, initial)
    axes = tuple(range(initial.n, initial.n + initial.p))
    coeffs = np.fft.fftn(driving0, axes=axes) / np.prod(initial.fiber.shape)
    mags = np.abs(coeffs)
    zero = (slice(None),) * initial.n + (0,) * initial.p
    mags[zero] = 0.0
    summed = mags.sum(axis=axes)
    gap = flat_spectral_gap(initial.fiber) * np.exp(-2.0 * geo.psi_fiber_mean(initial))
    bound = float(np.max(summed / gap))
    return math.exp(2.0 * bound / initial.n)


def check_uniform_equivalence(trajectory: Trajectory,
                              slack: float = 1e-12) -> CheckReport:
    """sup_t |phi_t - phi_0| against the spectral certificate, per fiber."""
    c = uniform_equivalence_constant(trajectory)
    bound = math.log(c) / 2.0
    worst = 0.0
    for state in trajectory.states + (trajectory.limit,):
        worst = max(worst, float(np.max(np.abs(state.phi - trajectory.initial.phi))))
    return CheckReport("uniform_equivalence", max(0.0, worst - bound), slack,
                       trajectory.sample_times[-1])


def check_oracle_agreement(trajectory: Trajectory, t: float = 1.0,
                           grid_points: int = 256,
                           scheme: FdScheme | None = None,
                           tolerance: float = ORACLE_TOL) -> CheckReport:
    """Spectral flow against the finite-difference march on a finer grid.

    The conformal factor itself solves the leafwise heat equation, so
    both paths evolve phi from the same trigonometrically resampled
    initial data and the report carries their sup-norm gap.  For p = 2
    the comparison runs at the native resolution.
    """
    if scheme is None:
        scheme = FdScheme(dt=1e-3)
    initial = trajectory.initial
    if not trajectory.exact_path:
        raise UnsupportedScenarioError(
            "oracle agreement compares against the exact path; psi must be "
            "constant along fibers"
        )
    if trajectory.config.variant != "plain":
        raise UnsupportedScenarioError("oracle agreement runs on the plain variant")
    psi_mean = geo.psi_fiber_mean(initial)
    rate = np.exp(-2.0 * psi_mean)

    if initial.p == 1 and grid_points != initial.fiber.points[0]:
        fine_grid = FiberGrid(1, initial.fiber.sides, (grid_points,))
        phi0 = fb.resample_values(initial.phi, initial.fiber, grid_points)
    else:
        fine_grid = initial.fiber
        phi0 = initial.phi
    spectral = fb.evolve_values(phi0, fine_grid, t, rate_scale=rate)
    psi_nodal = np.broadcast_to(
        psi_mean.reshape(psi_mean.shape + (1,) * initial.p),
        psi_mean.shape + fine_grid.shape,
    )
    flat_psi = psi_nodal.reshape((-1,) + fine_grid.shape)
    flat_phi = phi0.reshape((-1,) + fine_grid.shape)
    stepped = np.empty_like(flat_phi)
    for j in range(flat_phi.shape[0]):
        stepped[j] = fd_heat_run(flat_phi[j], flat_psi[j], fine_grid, t, scheme)
    gap = float(np.max(np.abs(spectral - stepped.reshape(phi0.shape))))
    return CheckReport("oracle_agreement", gap, tolerance, t)


def fd_flow_error(points: int, t: float, dt: float, side: float = 2.0 * math.pi,
                  mode: int = 1, amplitude: float = 1.0) -> float:
    """Sup error of the finite-difference heat march on one cosine mode."""
    grid = FiberGrid(1, (side,), (points,))
    y = grid.coordinates()[0]
    u0 = amplitude * np.cos(2.0 * math.pi * mode * y / side)
    exact = math.exp(-fb.eigenvalue((mode,), grid) * t) * u0
    stepped = fd_heat_run(u0, np.zeros(points), grid, t, FdScheme(dt=dt))
    return float(np.max(np.abs(stepped - exact)))


def check_fd_convergence_order(resolutions: tuple[int, ...] = (64, 128, 256),
                               t: float = 1.0, dt: float = 1e-3,
                               tolerance: float = ORDER_TOL) -> CheckReport:
    """Measured spatial order of the theta-scheme against the closed form.

    Fits log error versus log spacing over the given resolutions; the
    centered second-difference stencil is second order, so the residual
    is |slope - 2|.
    """
    if len(resolutions) < 2:
        raise InputError("order measurement needs at least two resolutions")
    errs = [fd_flow_error(pts, t, dt) for pts in resolutions]
    hs = [2.0 * math.pi / pts for pts in resolutions]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return CheckReport("fd_convergence_order", abs(slope - 2.0), tolerance, t)


def estimate_decay_rate(trajectory: Trajectory, skip: int = 0) -> float:
    """Least-squares slope of log sup|driving scalar| over the samples.

    The driving scalar obeys the leafwise heat equation, so the slope
    approaches minus the effective spectral gap; single-mode data hits
    it exactly.  Raises on degenerate (identically zero) trajectories or
    when fewer than 4 usable samples remain.
    """
    ts, logs = [], []
    for record in trajectory.diagnostics[skip:]:
        if record.max_driving > 0.0:
            ts.append(record.t)
            logs.append(math.log(record.max_driving))
    if len(ts) < 4:
        raise DegenerateTrajectoryError(
            "decay-rate fit needs at least 4 samples with a nonzero driving field"
        )
    return float(np.polyfit(ts, logs, 1)[0])


def check_decay_rate(trajectory: Trajectory, expected: float | None = None,
                     skip: int = 0, tolerance: float = DECAY_REL_TOL) -> CheckReport:
    """Fitted decay slope against the effective spectral-gap prediction."""
    slope = estimate_decay_rate(trajectory, skip)
    if expected is None:
        initial = trajectory.initial
        if trajectory.exact_path:
            scale = float(np.min(np.exp(-2.0 * geo.psi_fiber_mean(initial))))
        else:
            scale = float(np.min(np.exp(-2.0 * initial.psi)))
        expected = -flat_spectral_gap(initial.fiber) * scale
    residual = abs(slope - expected) / abs(expected)
    return CheckReport("decay_rate", residual, tolerance,
                       trajectory.sample_times[-1])


def _per_sample(fn):
    def runner(trajectory: Trajectory) -> list[CheckReport]:
        return [fn(state) for state in trajectory.states]

    return runner


def _rigidity_probe(state: ProductState) -> CheckReport:
    wave = np.sin(2.0 * math.pi * state.fiber.coordinates()[0] / state.fiber.sides[0])
    f_fiber = np.broadcast_to(wave, state.fiber.shape)
    f = np.broadcast_to(f_fiber.reshape((1,) * state.n + state.fiber.shape), state.shape)
    return check_harmonic_function_rigidity(state, np.ascontiguousarray(f))


CHECKERS = {
    "divergence_identity": _per_sample(check_divergence_identity),
    "codim1_identity": _per_sample(check_codim1_identity),
    "harmonic_rigidity": _per_sample(_rigidity_probe),
    "preservation": check_preservation,
    "monotonicity": check_monotonicity,
    "volume_ode": lambda traj: [check_volume_ode(traj)],
    "bperp_scaling": lambda traj: [check_bperp_scaling(traj)],
    "uniform_equivalence": lambda traj: [check_uniform_equivalence(traj)],
    "oracle_agreement": lambda traj: [check_oracle_agreement(traj)],
    "decay_rate": lambda traj: [check_decay_rate(traj)],
    "fd_convergence_order": lambda traj: [check_fd_convergence_order()],
}


def run_checks(trajectory: Trajectory, names: list[str]) -> list[CheckReport]:
    """Run the named checkers against one trajectory, in the given order."""
    reports = []
    for name in names:
        if name not in CHECKERS:
            raise InputError(
                f"unknown check {name!r}; known: {', '.join(sorted(CHECKERS))}"
            )
        reports.extend(CHECKERS[name](trajectory))
    return reports
