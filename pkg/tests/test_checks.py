"""Tests for the invariant checkers.

Each checker is exercised on a scenario where the checked identity has a
hand-computable outcome: the single-harmonic flow (everything in closed
form), a base-twisted run with a genuinely nonzero normal shape operator,
and degenerate or unsupported inputs that must raise instead of
reporting.  Quadrature oracles come from scipy.integrate.quad.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import foliflow as ff
from foliflow import checks
from foliflow import fiber as fb
from foliflow import geometry as geo
from foliflow.errors import (DegenerateTrajectoryError, InputError,
                             UnsupportedScenarioError)

BASE4 = ff.FiberGrid(1, (2.0 * math.pi,), (4,))
BASE8 = ff.FiberGrid(1, (2.0 * math.pi,), (8,))
CIRCLE = ff.FiberGrid(1, (2.0 * math.pi,), (64,))
TORUS = ff.FiberGrid(2, (2.0 * math.pi, 2.0 * math.pi), (32, 32))


def single_mode_traj(samples=(0.0, 0.5, 1.0, 2.0), variant="plain"):
    state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2})
    config = ff.FlowConfig(n=1, p=1, t_end=max(samples), samples=samples,
                           variant=variant)
    return ff.run_extrinsic_flow(state, config)


def fd_path_traj():
    state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2},
                                           {(0, 1): 0.1})
    config = ff.FlowConfig(n=1, p=1, t_end=1.0, samples=(0.0, 0.5, 1.0))
    return ff.run_extrinsic_flow(state, config)


class TestCheckReport:
    def test_boundary_residual_passes(self):
        report = checks.CheckReport("x", 1e-8, 1e-8, 0.0)
        assert report.passed

    def test_exceeding_residual_fails(self):
        report = checks.CheckReport("x", 2e-8, 1e-8, 0.0)
        assert not report.passed
        assert "FAIL" in str(report)

    def test_str_mentions_name_and_pass(self):
        text = str(checks.CheckReport("volume_ode", 0.0, 1e-4, 1.5))
        assert "volume_ode" in text and "pass" in text


class TestDivergenceIdentity:
    def test_product_state_trivial(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        lhs, rhs = checks.divergence_identity_sides(state)
        assert lhs == 0.0 and rhs == 0.0

    def test_sides_match_quadrature(self):
        """Both sides equal int |H|^2 dvol = 2 pi int 0.04 sin^2 e^{0.2 cos}."""
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2})
        lhs, rhs = checks.divergence_identity_sides(state)
        expected = 2.0 * math.pi * quad(
            lambda y: 0.04 * math.sin(y) ** 2 * math.exp(0.2 * math.cos(y)),
            0.0, 2.0 * math.pi)[0]
        assert lhs == pytest.approx(expected, rel=1e-12)
        assert rhs == pytest.approx(expected, rel=1e-12)
        assert checks.check_divergence_identity(state).passed

    def test_gradient_test_field(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2},
                                               {(0, 1): 0.1})
        f = fb.harmonic_field((BASE4, CIRCLE), {(0, 2): (0.0, 0.5)})
        xi = geo.grad_perp(f, state)
        report = checks.check_divergence_identity(state, xi)
        assert report.residual < 1e-12

    def test_xi_shape_checked(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        with pytest.raises(InputError):
            checks.check_divergence_identity(state, np.zeros((2,) + state.shape))


class TestCodim1Identity:
    def test_reeb_default_probe(self):
        y = CIRCLE.coordinates()[0]
        tau0 = np.broadcast_to(np.cos(y), (8, 64))
        traj = ff.run_codim1(tau0, BASE8, CIRCLE,
                             ff.FlowConfig(n=1, p=1, t_end=1.0, samples=(0.0, 1.0)))
        for state in traj.states:
            assert checks.check_codim1_identity(state).residual < 1e-13

    def test_tau_as_test_function(self):
        # f = tau turns the identity into int N(tau) = int tau^2 > 0
        y = CIRCLE.coordinates()[0]
        tau0 = np.broadcast_to(np.cos(y), (8, 64))
        traj = ff.run_codim1(tau0, BASE8, CIRCLE,
                             ff.FlowConfig(n=1, p=1, t_end=1.0, samples=(0.5,)))
        state = traj.states[0]
        tau = checks.codim1_tau(state)
        assert checks.check_codim1_identity(state, tau).residual < 1e-12
        assert geo.integrate(state, tau * tau) > 0.0

    def test_holds_with_fiber_varying_psi(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2},
                                               {(0, 1): 0.1})
        f = fb.harmonic_field((BASE4, CIRCLE), {(0, 1): (0.0, 0.7)})
        assert checks.check_codim1_identity(state, f).residual < 1e-12

    def test_p2_rejected(self):
        state = ff.ProductState.from_harmonics(BASE4, TORUS, {})
        with pytest.raises(InputError):
            checks.check_codim1_identity(state)

    def test_f_shape_checked(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        with pytest.raises(InputError):
            checks.check_codim1_identity(state, np.zeros(64))


class TestHarmonicRigidity:
    def test_constant_function_trivial(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2})
        f = np.full(state.shape, 2.5)
        assert checks.check_harmonic_function_rigidity(state, f).residual == 0.0

    def test_flat_product_hand_identity(self):
        # H = 0, w = 1: d/dy(sin cos) + sin^2 = cos^2 pointwise
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        y = CIRCLE.coordinates()[0]
        f = np.ascontiguousarray(np.broadcast_to(np.sin(y), state.shape))
        assert checks.check_harmonic_function_rigidity(state, f).residual < 1e-13

    def test_twisted_state_with_psi(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2},
                                               {(0, 1): 0.1})
        f = fb.harmonic_field((BASE4, CIRCLE), {(0, 2): (0.4, 0.1)})
        assert checks.check_harmonic_function_rigidity(state, f).residual < 1e-10

    def test_shape_checked(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        with pytest.raises(InputError):
            checks.check_harmonic_function_rigidity(state, np.zeros(64))


class TestPreservation:
    def test_twisted_run_keeps_structure(self):
        reports = checks.check_preservation(single_mode_traj())
        assert {r.name for r in reports} == {"umbilical", "closed_theta",
                                             "normal_flags"}
        assert all(r.passed for r in reports)

    def test_needs_three_states(self):
        traj = single_mode_traj(samples=(0.0, 1.0))
        with pytest.raises(InputError):
            checks.check_preservation(traj)


class TestMonotonicity:
    def test_single_mode_dissipation(self):
        reports = checks.check_monotonicity(single_mode_traj())
        assert len(reports) == 4
        assert all(r.passed for r in reports)

    def test_prescribed_driving_form(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {(0, 1): 0.2})
        x = np.full((1,) + CIRCLE.shape, 0.1)
        config = ff.FlowConfig(n=1, p=1, t_end=1.0, samples=(0.0, 0.5, 1.0))
        traj = ff.run_prescribed(state, x, config)
        assert all(r.passed for r in checks.check_monotonicity(traj))


class TestVolumeOde:
    def test_plain_flow(self):
        report = checks.check_volume_ode(single_mode_traj())
        assert report.passed and report.residual < 1e-4

    def test_normalized_flow_both_sides_vanish(self):
        report = checks.check_volume_ode(single_mode_traj(variant="normalized"))
        assert report.passed

    def test_explicit_sample_time(self):
        report = checks.check_volume_ode(single_mode_traj(), t=1.0)
        assert report.sample_time == 1.0 and report.passed


class TestBperpScaling:
    def base_twisted_traj(self, variant="plain"):
        # psi = 0.1 cos x is fiber-constant but bends the base distribution
        state = ff.ProductState.from_harmonics(
            BASE4, CIRCLE, {(0, 1): 0.2}, {(1, 0): 0.1})
        config = ff.FlowConfig(n=1, p=1, t_end=1.0,
                               samples=(0.0, 0.5, 1.0), variant=variant)
        return ff.run_extrinsic_flow(state, config)

    def test_nonzero_shape_coefficient_scales(self):
        traj = self.base_twisted_traj()
        b0 = geo.second_fundamental(traj.initial).bperp_coeff
        assert np.max(np.abs(b0)) > 0.05
        report = checks.check_bperp_scaling(traj)
        assert report.passed and report.residual < 1e-8

    def test_normalized_variant(self):
        report = checks.check_bperp_scaling(self.base_twisted_traj("normalized"))
        assert report.passed

    def test_rejects_nonpositive_time(self):
        with pytest.raises(InputError):
            checks.check_bperp_scaling(self.base_twisted_traj(), t=0.0)


class TestUniformEquivalence:
    def test_single_mode_constant_closed_form(self):
        """Driving 0.2 cos y over gap 1 gives exactly c = exp(0.4)."""
        c = checks.uniform_equivalence_constant(single_mode_traj())
        assert c == pytest.approx(math.exp(0.4), rel=1e-12)

    def test_bound_holds_along_run(self):
        assert checks.check_uniform_equivalence(single_mode_traj()).passed

    def test_fd_path_rejected(self):
        with pytest.raises(UnsupportedScenarioError):
            checks.uniform_equivalence_constant(fd_path_traj())

    def test_gap_of_anisotropic_torus(self):
        grid = ff.FiberGrid(2, (2.0 * math.pi, 4.0 * math.pi), (16, 16))
        assert checks.flat_spectral_gap(grid) == pytest.approx(0.25)


class TestOracleAgreement:
    def test_circle_run_within_tolerance(self):
        report = checks.check_oracle_agreement(single_mode_traj())
        assert 0.0 < report.residual < 1e-4
        assert report.passed

    def test_torus_native_resolution(self):
        state = ff.ProductState.from_harmonics(BASE4, TORUS, {(0, 1, 2): 0.1})
        config = ff.FlowConfig(n=1, p=2, t_end=1.0, samples=(0.0, 1.0))
        traj = ff.run_extrinsic_flow(state, config)
        assert checks.check_oracle_agreement(traj).residual < 1e-3

    def test_normalized_rejected(self):
        with pytest.raises(UnsupportedScenarioError):
            checks.check_oracle_agreement(single_mode_traj(variant="normalized"))

    def test_fd_path_rejected(self):
        with pytest.raises(UnsupportedScenarioError):
            checks.check_oracle_agreement(fd_path_traj())


class TestFdConvergenceOrder:
    def test_measured_order_is_two(self):
        report = checks.check_fd_convergence_order()
        assert report.residual < 0.05

    def test_errors_shrink_with_resolution(self):
        errs = [checks.fd_flow_error(pts, 1.0, 1e-3) for pts in (64, 128, 256)]
        assert errs[0] > errs[1] > errs[2]

    def test_needs_two_resolutions(self):
        with pytest.raises(InputError):
            checks.check_fd_convergence_order(resolutions=(64,))


class TestDecayRate:
    def test_single_mode_slope(self):
        assert checks.estimate_decay_rate(single_mode_traj()) == pytest.approx(
            -1.0, rel=1e-10)

    def test_torus_mode_slope(self):
        state = ff.ProductState.from_harmonics(BASE4, TORUS, {(0, 1, 2): 0.1})
        config = ff.FlowConfig(n=1, p=2, t_end=1.0,
                               samples=(0.0, 0.25, 0.5, 0.75, 1.0))
        traj = ff.run_extrinsic_flow(state, config)
        assert checks.estimate_decay_rate(traj) == pytest.approx(-5.0, rel=1e-9)

    def test_mixed_modes_need_late_window(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE,
                                               {(0, 1): 0.2, (0, 2): 0.1})
        config = ff.FlowConfig(n=1, p=1, t_end=7.0,
                               samples=tuple(float(k) for k in range(8)))
        traj = ff.run_extrinsic_flow(state, config)
        early = checks.check_decay_rate(traj)
        late = checks.check_decay_rate(traj, skip=4)
        assert not early.passed
        assert late.passed

    def test_zero_trajectory_degenerate(self):
        state = ff.ProductState.from_harmonics(BASE4, CIRCLE, {})
        config = ff.FlowConfig(n=1, p=1, t_end=2.0, samples=(0.0, 0.5, 1.0, 2.0))
        traj = ff.run_extrinsic_flow(state, config)
        with pytest.raises(DegenerateTrajectoryError):
            checks.estimate_decay_rate(traj)

    def test_too_few_samples_degenerate(self):
        traj = single_mode_traj(samples=(0.0, 0.5, 1.0))
        with pytest.raises(DegenerateTrajectoryError):
            checks.estimate_decay_rate(traj)

    def test_explicit_expected_rate(self):
        report = checks.check_decay_rate(single_mode_traj(), expected=-1.0)
        assert report.residual < 1e-10


class TestRunChecks:
    def test_unknown_name_rejected(self):
        with pytest.raises(InputError, match="no_such_check"):
            checks.run_checks(single_mode_traj(), ["no_such_check"])

    def test_reports_concatenate_in_order(self):
        traj = single_mode_traj()
        reports = checks.run_checks(traj, ["divergence_identity", "volume_ode"])
        assert [r.name for r in reports] == ["divergence_identity"] * 4 + ["volume_ode"]

    def test_registry_names_are_stable(self):
        assert set(checks.CHECKERS) == {
            "divergence_identity", "codim1_identity", "harmonic_rigidity",
            "preservation", "monotonicity", "volume_ode", "bperp_scaling",
            "uniform_equivalence", "oracle_agreement", "decay_rate",
            "fd_convergence_order",
        }

    def test_rigidity_probe_runs_on_torus(self):
        state = ff.ProductState.from_harmonics(BASE4, TORUS, {(0, 1, 2): 0.1})
        config = ff.FlowConfig(n=1, p=2, t_end=1.0, samples=(0.0, 1.0))
        traj = ff.run_extrinsic_flow(state, config)
        reports = checks.run_checks(traj, ["harmonic_rigidity"])
        assert all(r.passed for r in reports)
