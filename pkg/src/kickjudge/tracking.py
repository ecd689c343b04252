"""Per-joint constant-velocity Kalman tracking with occlusion coasting.

Each joint runs an independent 4-state filter [x, y, vx, vy]. The observation
model H selects the position block, so the measurement update is

    x_post = x_prior + K (z - H x_prior)

with the gain K computed from the covariance recursion every step. Process
noise follows the continuous white-noise-acceleration model, parameterised by
a spectral density q so the filter stays consistent across frame rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PipelineConfig

# Frames a track may coast on prediction alone before it is declared lost
# (~0.5 s at 60 fps; beyond that extrapolated positions are unusable for
# impact geometry).
MAX_COASTED_FRAMES = 30

_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
_I4 = np.eye(4)


@dataclass(frozen=True)
class FilterParams:
    """Noise model for one joint filter.

    q: process-noise spectral density (m^2/s^3). r: measurement variance
    (m^2); set it to the square of the expected keypoint noise. p0: initial
    covariance scale.
    """

    q: float = 5.0
    r: float = 1e-4
    p0: float = 1.0

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0 or self.p0 <= 0:
            raise ValueError("q, r, p0 must all be > 0")


@dataclass(frozen=True)
class KalmanState:
    """Filter state: x_hat = [x m, y m, vx m/s, vy m/s], P its covariance."""

    x_hat: np.ndarray
    P: np.ndarray
    t_last: float

    @property
    def position(self) -> tuple[float, float]:
        return (float(self.x_hat[0]), float(self.x_hat[1]))

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.x_hat[2]), float(self.x_hat[3]))


@dataclass(frozen=True)
class JointTrack:
    joint_index: int
    state: KalmanState
    frames_coasted: int = 0
    lost: bool = False


def init_state(x: float, y: float, t: float, params: FilterParams) -> KalmanState:
    x_hat = np.array([x, y, 0.0, 0.0])
    P = params.p0 * _I4.copy()
    return KalmanState(x_hat=x_hat, P=P, t_last=t)


def init_track(joint_index: int, x: float, y: float, t: float, params: FilterParams) -> JointTrack:
    return JointTrack(joint_index=joint_index, state=init_state(x, y, t, params))


def _transition(dt: float) -> np.ndarray:
    F = _I4.copy()
    F[0, 2] = dt
    F[1, 3] = dt
    return F


def _process_noise(dt: float, q: float) -> np.ndarray:
    # Continuous white-noise acceleration, integrated over dt.
    dt2 = dt * dt
    a = dt2 * dt / 3.0
    b = dt2 / 2.0
    return q * np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, b],
            [b, 0.0, dt, 0.0],
            [0.0, b, 0.0, dt],
        ]
    )


# All joints of a stream step with the same dt, so the transition and noise
# matrices are shared; the cache keeps the hot loop allocation-free.
_matrix_cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}


def _matrices(dt: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    key = (dt, q)
    cached = _matrix_cache.get(key)
    if cached is None:
        if len(_matrix_cache) > 1024:
            _matrix_cache.clear()
        cached = (_transition(dt), _process_noise(dt, q))
        _matrix_cache[key] = cached
    return cached


def predict(state: KalmanState, dt: float, params: FilterParams) -> KalmanState:
    """Advance the state by dt seconds under the constant-velocity model."""
    if dt <= 0:
        raise ValueError("non_positive_dt")
    F, Q = _matrices(dt, params.q)
    x_hat = F @ state.x_hat
    P = F @ state.P @ F.T + Q
    P = (P + P.T) * 0.5
    return KalmanState(x_hat=x_hat, P=P, t_last=state.t_last + dt)


def update(state: KalmanState, z: tuple[float, float], params: FilterParams) -> KalmanState:
    """Fold one position observation into a predicted state."""
    zx, zy = float(z[0]), float(z[1])
    if not (math.isfinite(zx) and math.isfinite(zy)):
        raise ValueError("bad_observation")
    P = state.P
    # S = H P H' + R reduces to the position block plus r on the diagonal.
    s00 = P[0, 0] + params.r
    s01 = P[0, 1]
    s11 = P[1, 1] + params.r
    # Closed-form 2x2 inverse; S is PD because r > 0.
    det = s00 * s11 - s01 * s01
    S_inv = np.array([[s11, -s01], [-s01, s00]]) / det
    K = P[:, :2] @ S_inv
    innovation = np.array([zx, zy]) - state.x_hat[:2]
    x_hat = state.x_hat + K @ innovation
    # Joseph form keeps the covariance symmetric PSD under roundoff;
    # K H is just K padded with zero columns, so A = I - K H directly.
    A = _I4.copy()
    A[:, :2] -= K
    P_new = A @ P @ A.T + params.r * (K @ K.T)
    P_new = (P_new + P_new.T) * 0.5
    return KalmanState(x_hat=x_hat, P=P_new, t_last=state.t_last)


def step_track(
    track: JointTrack,
    frame_t: float,
    measurement: Optional[tuple[float, float, float]],
    config: PipelineConfig,
    params: FilterParams,
) -> tuple[JointTrack, tuple[float, float]]:
    """One frame step: always predict, update only on a confident measurement.

    measurement is (x, y, confidence) or None. Confidence below
    config.min_confidence counts as an occlusion: the track coasts on the
    prediction and frames_coasted increments. After MAX_COASTED_FRAMES
    consecutive coasts the returned track is flagged lost and the caller must
    re-initialize it.
    """
    dt = frame_t - track.state.t_last
    if dt <= 0:
        raise ValueError("non_positive_dt")
    state = predict(track.state, dt, params)
    if measurement is not None and measurement[2] >= config.min_confidence:
        state = update(state, (measurement[0], measurement[1]), params)
        new_track = JointTrack(track.joint_index, state, frames_coasted=0, lost=False)
    else:
        coasted = track.frames_coasted + 1
        new_track = JointTrack(
            track.joint_index, state, frames_coasted=coasted,
            lost=coasted > MAX_COASTED_FRAMES,
        )
    return new_track, state.position


def covariance_is_psd(P: np.ndarray, tol: float = 1e-9) -> bool:
    """Symmetry and positive semi-definiteness check used by the test suite."""
    if not np.allclose(P, P.T, atol=tol):
        return False
    return bool(np.linalg.eigvalsh(P).min() >= -tol)


class TrackBank:
    """All 18 joint tracks for one athlete, stepped together each frame.

    Lost tracks re-initialize on the next confident measurement of that
    joint. Single-owner mutable state: one bank belongs to one stream.
    """

    def __init__(self, config: PipelineConfig, params: FilterParams):
        self.config = config
        self.params = params
        self.tracks: list[Optional[JointTrack]] = [None] * 18

    def step(
        self, frame_t: float, measurements: list[Optional[tuple[float, float, float]]]
    ) -> list[tuple[float, float]]:
        """Returns the smoothed position for every joint at frame_t."""
        positions: list[tuple[float, float]] = []
        for j, meas in enumerate(measurements):
            track = self.tracks[j]
            confident = meas is not None and meas[2] >= self.config.min_confidence
            if track is None or track.lost:
                if confident:
                    track = init_track(j, meas[0], meas[1], frame_t, self.params)
                    self.tracks[j] = track
                    positions.append((meas[0], meas[1]))
                elif track is not None:
                    # Lost and still occluded: hold the last estimate.
                    positions.append(track.state.position)
                elif meas is not None:
                    positions.append((meas[0], meas[1]))
                else:
                    positions.append((math.nan, math.nan))
                continue
            track, pos = step_track(track, frame_t, meas, self.config, self.params)
            self.tracks[j] = track
            positions.append(pos)
        return positions

    def is_lost(self, joint: int) -> bool:
        track = self.tracks[joint]
        return track is None or track.lost
