import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_tvopt import scenarios
from adaptive_tvopt.objective import (
    build_power_supply,
    build_quadratic_tracking,
    build_source_seek_local,
    finite_difference_check,
    oracle_parameters,
    validate_assumptions,
)
from adaptive_tvopt.trajectories import Harmonic, Polynomial, sin_cos, trajectory_from_dict


def _sin_cos_objective():
    traj = sin_cos()
    return build_quadratic_tracking(2, np.eye(2), traj.value, traj.rate, traj.accel)


def _source_seek_agent(row):
    traj = sin_cos()
    anchors = list(zip(scenarios.ANCHOR_WEIGHTS[row], scenarios.ANCHORS))
    return build_source_seek_local(
        scenarios.SOURCE_POWER, scenarios.SOURCE_GAIN, traj.value, traj.rate, anchors, traj.accel
    )


def test_power_supply_decomposition():
    k1, k2 = 1.5, 0.7
    obj = build_power_supply(k1, k2, lambda t: np.array([t, 1.0]), lambda t: np.array([1.0, 0.0]))
    omega, A = oracle_parameters(obj)
    np.testing.assert_allclose(omega, [[2.0]])
    x, t = np.array([0.3]), 2.0
    np.testing.assert_allclose(obj.h_fn(x, t), [[1.0]])
    # ∂∇f/∂t = A g with g = ṙ = (1, 0): only the k1 column is excited
    np.testing.assert_allclose(A @ obj.g_fn(x, t), [2.0 * k1])
    np.testing.assert_allclose(obj.dgrad_dt(x, t), [2.0 * k1])


def test_ramp_tracking_matches_closed_form():
    k1, k2 = 3.0, 0.5
    obj = build_quadratic_tracking(1, k1, lambda t: np.array([k2 * t]), lambda t: np.array([k2]))
    omega, A = oracle_parameters(obj)
    assert omega[0, 0] == pytest.approx(2 * k1)
    x, t = np.array([1.0]), 4.0
    assert obj.h_fn(x, t)[0, 0] == 1.0
    assert (A @ obj.g_fn(x, t))[0] == pytest.approx(-2 * k1 * k2)


def test_constant_reference_has_zero_time_derivative():
    obj = build_quadratic_tracking(2, np.eye(2), lambda t: np.zeros(2), lambda t: np.zeros(2))
    np.testing.assert_array_equal(obj.dgrad_dt(np.ones(2), 3.0), 0.0)
    np.testing.assert_array_equal(obj.grad(np.zeros(2), 3.0), 0.0)


def test_sin_cos_values_at_origin():
    obj = _sin_cos_objective()
    x = np.zeros(2)
    np.testing.assert_allclose(obj.grad(x, 0.0), [0.0, -2.0])
    np.testing.assert_allclose(obj.hessian(x, 0.0), 2 * np.eye(2))
    np.testing.assert_allclose(obj.dgrad_dt(x, 0.0), [-2.0, 0.0])


def test_non_pd_weight_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        build_quadratic_tracking(2, np.diag([1.0, -1.0]), lambda t: np.zeros(2), lambda t: np.zeros(2))


def test_source_seek_curvature():
    obj = _source_seek_agent(0)
    np.testing.assert_allclose(obj.hessian(np.zeros(2), 0.0), (2 / 0.9 + 0.4) * np.eye(2))


def test_source_seek_rows_give_identical_hessians():
    hessians = [_source_seek_agent(i).hessian(np.zeros(2), 0.0) for i in range(5)]
    for H in hessians[1:]:
        np.testing.assert_allclose(H, hessians[0], atol=1e-15)


def test_gradient_vanishes_at_source_without_anchors():
    traj = sin_cos()
    obj = build_source_seek_local(0.9, np.diag([1.9, 2.1]), traj.value, traj.rate, [], traj.accel)
    t = 0.8
    np.testing.assert_allclose(obj.grad(np.diag([1.9, 2.1]) @ traj.value(t), t), 0.0, atol=1e-14)


def test_finite_difference_examples():
    assert finite_difference_check(_sin_cos_objective(), np.array([0.4, -1.2]), 0.7) < 1e-6
    assert finite_difference_check(_source_seek_agent(0), np.array([4.0, 4.0]), 0.0) < 1e-6
    flat = build_quadratic_tracking(1, 1.0, lambda t: np.zeros(1), lambda t: np.zeros(1))
    assert finite_difference_check(flat, np.zeros(1), 0.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.floats(0, 50),
    st.integers(0, 4),
)
def test_source_seek_derivatives_and_decomposition(x, t, row):
    obj = _source_seek_agent(row)
    x = np.array(x)
    assert finite_difference_check(obj, x, t) < 1e-6
    omega, A = oracle_parameters(obj)
    assert np.linalg.norm(obj.hessian(x, t) - omega @ obj.h_fn(x, t)) <= 1e-9
    assert np.linalg.norm(obj.dgrad_dt(x, t) - A @ obj.g_fn(x, t)) <= 1e-9


def test_validator_flags_different_hessians():
    traj = Harmonic((1.0,), (0.0,), (1.0,))
    objs = [
        build_quadratic_tracking(1, 1.0, traj.value, traj.rate, traj.accel),
        build_quadratic_tracking(1, 2.0, traj.value, traj.rate, traj.accel),
    ]
    report = validate_assumptions(objs, [(np.zeros(1), 0.5)], alpha_bound=10.0)
    assert not report.passed
    assert "A1" in {k for k, r in report.results.items() if not r.passed}


def test_validator_flags_unbounded_reference_rate():
    traj = Polynomial(((0.0, 0.0, 1.0),))
    obj = build_quadratic_tracking(1, 1.0, traj.value, traj.rate, traj.accel)
    samples = [(np.zeros(1), t) for t in np.linspace(0.0, 1e6, 11)]
    report = validate_assumptions([obj], samples, alpha_bound=10.0)
    assert "A2" in {k for k, r in report.results.items() if not r.passed}


def test_source_seek_family_passes_validator():
    objs = [_source_seek_agent(i) for i in range(5)]
    rng = np.random.default_rng(3)
    samples = [(rng.uniform(-8, 8, size=(5, 2)), float(rng.uniform(0, 20))) for _ in range(100)]
    report = validate_assumptions(objs, samples, alpha_bound=10.0)
    assert report.passed, str(report)


def test_view_hides_parameters_and_adds_noise():
    obj = _sin_cos_objective()
    view = obj.view()
    assert not hasattr(view, "hessian") and not hasattr(view, "_A")
    noisy = obj.view(grad_noise=0.5, rng=np.random.default_rng(0))
    x = np.ones(2)
    assert not np.allclose(noisy.grad(x, 1.0), obj.grad(x, 1.0))
    with pytest.raises(ValueError):
        obj.view(grad_noise=0.1)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "harmonic", "sin": [1.0, 0.5], "cos": [0.0, 2.0], "frequency": [1.0, 3.0]},
        {"kind": "polynomial", "coeffs": [[1.0, -2.0, 0.5, 0.1]]},
        {"kind": "constant", "value": [1.0, -1.0]},
    ],
)
def test_trajectory_derivatives(spec):
    traj = trajectory_from_dict(spec)
    h = 1e-5
    for t in (0.0, 0.9, 4.2):
        np.testing.assert_allclose(traj.rate(t), (traj.value(t + h) - traj.value(t - h)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(traj.accel(t), (traj.rate(t + h) - traj.rate(t - h)) / (2 * h), atol=1e-8)
    assert trajectory_from_dict(traj.to_dict()).to_dict() == traj.to_dict()
