"""Conformal flow of the leaf metric factor, driven by mean curvature.

The evolution law contracts the truncated metric ghat = exp(2*phi) g1 by
the divergence of the leaf mean curvature:

    d/dt g = -(2/n) (Div_perp H) ghat             (plain)
    d/dt g = -((2/n) Div_perp H + r(t)) ghat      (normalized)
    d/dt g = -(2/n) Div_perp(H - X) ghat          (prescribed)

with r(t) = -(2/n) int Div_perp H dvol / vol <= 0.  For the twisted
ansatz H = -n grad_perp phi the plain law collapses to the leafwise heat
equation d/dt phi = Lap_perp phi (the n in the trace of the second
fundamental form cancels the 2/n prefactor against d/dt ghat = 2 phi'
ghat), and the driving scalar Div_perp H solves the same heat equation.
The metric is recovered from its running time integral,

    phi(t) = phi(0) - (1/n) int_0^t Div_perp(H_s - X) ds,

so for fiber-constant psi every sample is an exact Fourier multiplier
with per-fiber eigenvalue scale exp(-2 psibar); sample times are
arbitrary and no time-stepping error enters.  When psi varies along a
fiber the leaf Laplacian has variable coefficients and the
finite-difference path becomes the authoritative solver.

Normalized trajectories come from the rescaling equivalence with the
plain flow: ghat~(t) = vol(g_t)^{-2/n} ghat(t) preserves volume and
satisfies the normalized law, so the engine evolves the plain flow and
projects each sample.

The prescribed variant replaces H by H - X for a fixed fiber-tangent X.
For p = 2 the mean-curvature 1-form minus the X 1-form must be closed,
which is checked before any evolution; the t -> inf limit then retains
exactly the harmonic (fiber-constant) component of that 1-form, so the
flow cannot converge to H = X unless that component vanishes.
"""

from __future__ import annotations

import math
import os
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import fiber as fb
from . import geometry as geo
from .errors import HypothesisViolationError, InputError, UnsupportedScenarioError
from .fdref import FdScheme, fd_heat_run
from .fiber import FiberGrid
from .geometry import ProductState

VARIANTS = ("plain", "normalized", "prescribed")

# Driving fields with sup norm at or below this are treated as absent:
# the trajectory short-circuits to a constant metric.
ZERO_FIELD_TOL = 0.0


def _thread_workers() -> int:
    raw = os.environ.get("FOLIFLOW_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters shared by every flow variant."""

    n: int
    p: int
    t_end: float
    samples: tuple[float, ...]
    variant: str = "plain"
    x_field: np.ndarray | None = None
    tol_converge: float = 1e-10
    oracle_check: bool = False
    closedness_tol: float = 1e-9
    fd_scheme: FdScheme = field(default_factory=FdScheme)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n not in (1, 2) or self.p not in (1, 2):
            raise InputError(f"dimensions n, p must be 1 or 2, got n={self.n}, p={self.p}")
        if not self.t_end > 0:
            raise InputError(f"t_end must be positive, got {self.t_end}")
        samples = tuple(float(s) for s in self.samples)
        if not samples:
            raise InputError("at least one sample time is required")
        if list(samples) != sorted(samples):
            raise InputError("sample times must be sorted ascending")
        if samples[0] < 0 or samples[-1] > self.t_end + 1e-12:
            raise InputError("sample times must lie within [0, t_end]")
        if (self.x_field is not None) != (self.variant == "prescribed"):
            raise InputError("x_field must be given exactly when variant='prescribed'")
        if not self.tol_converge > 0:
            raise InputError("tol_converge must be positive")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-sample scalar diagnostics of a trajectory."""

    t: float
    vol: float
    int_h2: float            # int |H|^2 dvol
    max_div_h: float         # sup |Div_perp H|
    rate: float              # r(t) of the sampled state
    max_driving: float       # sup |Div_perp (H - X)|; equals max_div_h unless prescribed
    umbilical_residual: float
    d_theta_sup: float
    tangent_label: str
    normal_label: str


@dataclass(frozen=True)
class Trajectory:
    """Sampled flow together with its analytic limit and evaluator.

    ``evaluate(t)`` reproduces the state at any time in [0, inf]; on the
    exact path it is a closed-form multiplier, on the finite-difference
    path it marches (and caches) forward.  ``limit`` is evaluate(inf).
    """

    states: tuple[ProductState, ...]
    diagnostics: tuple[DiagnosticsRecord, ...]
    limit: ProductState
    converged_time: float | None
    config: FlowConfig
    initial: ProductState
    evaluate: Callable[[float], ProductState]
    exact_path: bool

    @property
    def sample_times(self) -> tuple[float, ...]:
        return tuple(d.t for d in self.diagnostics)


def _broadcast_x(x_field: np.ndarray | None, state: ProductState) -> np.ndarray:
    if x_field is None:
        return np.zeros((state.p,) + state.shape)
    x = np.asarray(x_field, dtype=float)
    if x.shape == (state.p,) + state.fiber.shape:
        x = np.broadcast_to(
            x.reshape((state.p,) + (1,) * state.n + state.fiber.shape),
            (state.p,) + state.shape,
        ).copy()
    if x.shape != (state.p,) + state.shape:
        raise InputError(
            f"x_field shape {x.shape} is neither (p,)+fiber shape nor (p,)+full shape"
        )
    return x


def normalization_rate(state: ProductState) -> float:
    """r(t) = -(2/n) int Div_perp H dvol / vol of one state.

    By the divergence identity this equals -(2/n) int |H|^2 dvol / vol,
    so it is nonpositive and vanishes exactly on product metrics.
    """
    div_h = geo.div_perp(geo.twisted_mean_curvature(state), state)
    return float(-(2.0 / state.n) * geo.integrate(state, div_h) / geo.volume(state))


def project_unit_volume(state: ProductState) -> ProductState:
    """Rescale ghat conformally (fiber-constant) to unit total volume."""
    shift = math.log(geo.volume(state)) / state.n
    return state.replace_phi(state.phi - shift, state.t)


def reconstruct_metric(initial: ProductState, divh0: np.ndarray, t: float) -> ProductState:
    """State at time t from the initial driving scalar Div_perp H.

    Exact-path reconstruction: the driving scalar obeys the leafwise heat
    equation, so its running time integral is a closed-form multiplier and
    phi(t) = phi(0) - (1/n) * that integral.  The exponent is uniformly
    bounded by sum_{l /= 0} |mode_l| / lambda_1 per fiber, which certifies
    uniform metric equivalence along the whole flow.
    """
    if not geo.psi_is_fiber_constant(initial):
        raise UnsupportedScenarioError(
            "spectral reconstruction requires psi constant along each fiber"
        )
    divh0 = np.asarray(divh0, dtype=float)
    if divh0.shape != initial.shape:
        raise InputError(f"driving scalar shape {divh0.shape} != state shape {initial.shape}")
    rate = np.exp(-2.0 * geo.psi_fiber_mean(initial))
    integral = fb.time_integral_values(divh0, initial.fiber, t, rate_scale=rate)
    return initial.replace_phi(initial.phi - integral / initial.n, t)


def _fd_march(phi_vals: np.ndarray, state0: ProductState, dt_scheme: FdScheme,
              span: float) -> np.ndarray:
    """Advance a full stack of fibers by the finite-difference heat march.

    Fibers sharing a psi profile are marched together through one
    factorization; distinct profiles may run on a small thread pool sized
    by the FOLIFLOW_THREADS environment variable.
    """
    fiber_grid = state0.fiber
    fiber_size = int(np.prod(fiber_grid.shape))
    flat_phi = phi_vals.reshape(-1, fiber_size)
    flat_psi = state0.psi.reshape(-1, fiber_size)
    profiles, inverse = np.unique(flat_psi, axis=0, return_inverse=True)
    out = np.empty_like(flat_phi)

    def march_group(k: int):
        members = np.nonzero(inverse == k)[0]
        stack = flat_phi[members].reshape((-1,) + fiber_grid.shape)
        evolved = fd_heat_run(stack, profiles[k].reshape(fiber_grid.shape),
                              fiber_grid, span, dt_scheme)
        out[members] = evolved.reshape(len(members), fiber_size)

    workers = min(_thread_workers(), len(profiles))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(march_group, range(len(profiles))))
    else:
        for k in range(len(profiles)):
            march_group(k)
    return out.reshape(phi_vals.shape)


def _plain_evaluator(initial: ProductState, driving0: np.ndarray,
                     config: FlowConfig, exact: bool) -> Callable[[float], ProductState]:
    """Closed-form (or marching) solver for d/dt phi = Lap_perp phi."""
    if exact:
        rate = np.exp(-2.0 * geo.psi_fiber_mean(initial))

        def evaluate(t: float) -> ProductState:
            if t < 0:
                raise InputError(f"trajectory time must be >= 0, got {t}")
            integral = fb.time_integral_values(driving0, initial.fiber, t, rate_scale=rate)
            return initial.replace_phi(initial.phi - integral / initial.n, t)

        return evaluate

    cache: list[tuple[float, np.ndarray]] = [(0.0, initial.phi)]

    def evaluate(t: float) -> ProductState:
        if t < 0:
            raise InputError(f"trajectory time must be >= 0, got {t}")
        if math.isinf(t):
            mean = geo.fiber_average(initial, initial.phi)
            phi_inf = np.broadcast_to(
                mean.reshape(initial.base.shape + (1,) * initial.p), initial.shape
            ).copy()
            return initial.replace_phi(phi_inf, t)
        times = [c[0] for c in cache]
        idx = bisect_right(times, t) - 1
        t0, phi0 = cache[idx]
        if t == t0:
            return initial.replace_phi(phi0, t)
        phi_t = _fd_march(phi0, initial, config.fd_scheme, t - t0)
        cache.insert(idx + 1, (t, phi_t))
        return initial.replace_phi(phi_t, t)

    return evaluate


def _diagnose(state: ProductState, x: np.ndarray, variant: str) -> DiagnosticsRecord:
    data = geo.second_fundamental(state)
    div_h = geo.div_perp(data.h, state)
    if variant == "prescribed":
        driving = geo.div_perp(data.h - x, state)
    else:
        driving = div_h
    vol = geo.volume(state)
    h_sq = np.exp(2.0 * state.psi) * np.sum(data.h ** 2, axis=0)
    report = geo.classify(state, data=data)
    return DiagnosticsRecord(
        t=state.t,
        vol=vol,
        int_h2=geo.integrate(state, h_sq),
        max_div_h=float(np.max(np.abs(div_h))),
        rate=float(-(2.0 / state.n) * geo.integrate(state, div_h) / vol),
        max_driving=float(np.max(np.abs(driving))),
        umbilical_residual=report.umbilical_residual,
        d_theta_sup=geo.d_theta_sup(state, data.h),
        tangent_label=report.tangent.label,
        normal_label=report.normal.label,
    )


def run_extrinsic_flow(initial: ProductState, config: FlowConfig) -> Trajectory:
    """Evolve one product state under the configured flow variant.

    Chooses the exact spectral path when psi is fiber-constant and the
    finite-difference path otherwise, samples the requested times, and
    always emits the analytic t -> inf limit.  A zero driving field
    short-circuits to a constant trajectory.
    """
    if (initial.n, initial.p) != (config.n, config.p):
        raise InputError(
            f"config dimensions (n={config.n}, p={config.p}) do not match the state "
            f"(n={initial.n}, p={initial.p})"
        )
    x = _broadcast_x(config.x_field, initial)
    h0 = geo.twisted_mean_curvature(initial)

    if initial.p == 2:
        closed_sup = _d_theta_sup_of(initial, h0 - x)
        if closed_sup > config.closedness_tol:
            raise HypothesisViolationError(
                f"mean-curvature 1-form (minus X) is not closed: sup |d theta| = "
                f"{closed_sup:.3e} > {config.closedness_tol:.1e}"
            )

    driving0 = geo.div_perp(h0 - x, initial)
    exact = geo.psi_is_fiber_constant(initial)

    if float(np.max(np.abs(driving0))) <= ZERO_FIELD_TOL:
        def evaluate_plain(t: float) -> ProductState:
            if t < 0:
                raise InputError(f"trajectory time must be >= 0, got {t}")
            return initial.replace_phi(initial.phi, t)
    else:
        if not exact and config.variant == "prescribed":
            raise UnsupportedScenarioError(
                "the prescribed variant requires a fiber-constant psi"
            )
        evaluate_plain = _plain_evaluator(initial, driving0, config, exact)

    if config.variant == "normalized":
        def evaluate(t: float) -> ProductState:
            state = evaluate_plain(t)
            shift = math.log(geo.volume(state)) / state.n
            return state.replace_phi(state.phi - shift, t)
    else:
        evaluate = evaluate_plain

    states = tuple(evaluate(t) for t in config.samples)
    diagnostics = tuple(_diagnose(s, x, config.variant) for s in states)
    limit = evaluate(math.inf)

    converged_time = None
    for record in diagnostics:
        if record.max_driving < config.tol_converge:
            converged_time = record.t
            break

    return Trajectory(
        states=states,
        diagnostics=diagnostics,
        limit=limit,
        converged_time=converged_time,
        config=config,
        initial=initial,
        evaluate=evaluate,
        exact_path=exact,
    )


def _d_theta_sup_of(state: ProductState, h_like: np.ndarray) -> float:
    if state.p == 1:
        return 0.0
    theta = geo.theta_h(state, h_like)
    d1 = fb.gradient_values(theta[1], state.fiber)[0]
    d2 = fb.gradient_values(theta[0], state.fiber)[1]
    return float(np.max(np.abs(d1 - d2)))


def run_normalized(initial: ProductState, config: FlowConfig) -> Trajectory:
    """Volume-preserving variant; forces variant='normalized'."""
    if config.variant != "normalized":
        config = replace(config, variant="normalized")
    return run_extrinsic_flow(initial, config)


def run_prescribed(initial: ProductState, x_field: np.ndarray,
                   config: FlowConfig) -> Trajectory:
    """Flow toward a prescribed mean-curvature target X; forces the variant."""
    config = replace(config, variant="prescribed", x_field=np.asarray(x_field, dtype=float))
    return run_extrinsic_flow(initial, config)


def run_codim1(tau0: np.ndarray, base: FiberGrid, fiber_grid: FiberGrid,
               config: FlowConfig) -> Trajectory:
    """Codimension-one flow from an initial leafwise mean-curvature scalar.

    With unit normal N along one-dimensional flat fibers the state's H is
    tau * N and the law reduces to d/dt tau = N(N(tau)), the fiber heat
    equation.  The scalar must have zero fiber means: tau = -n N(phi) for
    a genuine metric, so the periodic primitive fixes phi(0) and the
    constructed run keeps int tau dvol = 0 along the way (the circle-wise
    integral of a mean curvature against the evolving volume vanishes).
    The limit scalar is the fiber average, hence zero.
    """
    if fiber_grid.dim != 1:
        raise UnsupportedScenarioError("codimension-one runs need a one-dimensional fiber")
    tau0 = np.asarray(tau0, dtype=float)
    if tau0.shape != base.shape + fiber_grid.shape:
        raise InputError(
            f"tau0 shape {tau0.shape} != grid shape {base.shape + fiber_grid.shape}"
        )
    try:
        primitive = fb.antiderivative_values(tau0, fiber_grid)
    except InputError as exc:
        raise UnsupportedScenarioError(
            "tau0 has a nonzero fiber mean, so it is not the mean curvature of any "
            "periodic conformal product"
        ) from exc
    phi0 = -primitive / base.dim
    initial = ProductState(base, fiber_grid, phi0, np.zeros_like(phi0), 0.0)
    return run_extrinsic_flow(initial, config)


def tau_of_state(state: ProductState) -> np.ndarray:
    """Leafwise mean-curvature scalar g(N, H) of a codimension-one state."""
    if state.p != 1:
        raise InputError("tau is defined for one-dimensional fibers only")
    if float(np.max(np.abs(state.psi))) > 1e-13:
        raise UnsupportedScenarioError("codimension-one states use a flat fiber metric")
    return geo.twisted_mean_curvature(state)[0]
