import numpy as np
import pytest

from metamorph import (
    LagrangianSpec,
    LandmarkState,
    NoiseBasis,
    BrownianDriver,
    SchemeChoice,
    TracerCloud,
    advance_tracers,
    integrate,
)


def test_seed_cloud():
    cloud = TracerCloud.seed([[0.1, 0.2], [0.3, 0.4]])
    assert cloud.count == 2
    assert np.array_equal(cloud.labels, cloud.positions)
    assert np.allclose(cloud.deformation, np.eye(2))
    with pytest.raises(ValueError):
        TracerCloud.seed(np.zeros((0, 2)))


def test_tracers_identity_without_motion(landmark_spec):
    st = LandmarkState(0.0, [[0.0, 0.0]], [[0.0, 0.0]], [[0.0, 0.0]])
    traj = integrate(landmark_spec, st, SchemeChoice.DETERMINISTIC_RK4, 0.01, 50)
    cloud = TracerCloud.seed([[0.5, -0.3], [2.0, 1.0]])
    out = advance_tracers(cloud, traj, landmark_spec)
    assert np.array_equal(out.positions, cloud.positions)
    assert np.allclose(out.deformation, np.eye(2))


def test_tracers_translated_by_constant_noise(landmark_spec):
    st = LandmarkState(0.0, [[0.0, 0.0]], [[0.0, 0.0]], [[0.0, 0.0]])
    noise = NoiseBasis.constant([[0.4, -0.1]])
    dw = BrownianDriver(21, 0, dt=0.01, n_steps=50, n_modes=1).increments()
    traj = integrate(landmark_spec, st, SchemeChoice.STRATONOVICH_HEUN, 0.01, 50,
                     noise, dw)
    cloud = TracerCloud.seed([[1.0, 1.0], [-0.5, 0.2]])
    out = advance_tracers(cloud, traj, landmark_spec, noise)
    W = dw.sum()
    expected = cloud.labels + W * np.array([0.4, -0.1])
    assert np.max(np.abs(out.positions - expected)) < 1e-12
    assert np.allclose(out.deformation, np.eye(2))


def test_tracer_tracks_pure_deformation_landmark(landmark_spec):
    # zero comomentum: the landmark rides the transport flow, so a tracer
    # seeded on it must follow to integrator accuracy
    p = np.array([[0.6, 0.2]])
    st = LandmarkState(0.0, [[0.0, 0.0]], p, np.zeros((1, 2)))
    traj = integrate(landmark_spec, st, SchemeChoice.DETERMINISTIC_RK4, 1e-3, 1000)
    cloud = TracerCloud.seed([[0.0, 0.0]])
    out = advance_tracers(cloud, traj, landmark_spec)
    assert np.max(np.abs(out.positions - traj.terminal.q)) < 1e-6


def test_tracers_need_full_trajectory(landmark_spec):
    st = LandmarkState(0.0, [[0.0, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]])
    traj = integrate(landmark_spec, st, SchemeChoice.DETERMINISTIC_RK4, 0.01, 100,
                     record_every=10)
    with pytest.raises(ValueError, match="every step"):
        advance_tracers(TracerCloud.seed([[0.0, 0.0]]), traj, landmark_spec)


def test_tracer_series_length(landmark_spec):
    st = LandmarkState(0.0, [[0.0, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]])
    traj = integrate(landmark_spec, st, SchemeChoice.DETERMINISTIC_RK4, 0.01, 20)
    series = advance_tracers(TracerCloud.seed([[0.0, 0.0]]), traj, landmark_spec,
                             return_series=True)
    assert len(series) == 21
