"""Closed-loop check of a plan: unicycle vehicle, bearing sensing, EIF, waypoint controller.

The filter keeps the information pair (xi, Omega) with Omega = P^-1 and
xi = Omega mu.  Prediction goes through covariance form on the 3x3 state;
updates are additive in information form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from svrpll.instance import Instance, Point2
from svrpll.model import Solution

TWO_PI = 2.0 * math.pi
# the filter never weights a bearing more than this, even for noiseless sensing
SIGMA_FLOOR = 1e-4
TRACE_COLUMNS = ["step", "t", "x", "y", "psi", "xe", "ye", "psie", "sxx", "syy", "spp", "n_vis", "wp", "omega"]


class FilterDivergence(RuntimeError):
    pass


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    return r + TWO_PI if r <= -math.pi else r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    r = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


class VehicleState(NamedTuple):
    x: float
    y: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi])


class ControlInput(NamedTuple):
    v: float
    omega: float


@dataclass
class Belief:
    info_vector: np.ndarray
    info_matrix: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_moments(cls, mean, cov) -> "Belief":
        mean = np.array(mean, dtype=float)
        mean[2] = wrap_angle(mean[2])
        omega = np.linalg.inv(np.asarray(cov, dtype=float))
        omega = 0.5 * (omega + omega.T)
        return cls(omega @ mean, omega, mean)

    @property
    def cov(self) -> np.ndarray:
        p = np.linalg.inv(self.info_matrix)
        return 0.5 * (p + p.T)

    @property
    def state(self) -> VehicleState:
        return VehicleState(*self.mean)


@dataclass
class SimConfig:
    dt: float = 0.2
    n_steps: int = 3000
    v_nominal: float = 1.0
    controller_gain: float = 2.0
    min_wp_distance: float = 1.0
    sensing_range: Optional[float] = None  # None: use the instance's range
    omega_max: float = 2.0
    process_noise: np.ndarray = field(default_factory=lambda: np.diag([0.01 ** 2, 0.01 ** 2]))
    bearing_noise_std: float = math.radians(0.5)
    initial_cov: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, math.radians(5.0) ** 2]))
    rng_seed: int = 0
    start: Tuple[float, float] = (0.0, 35.0)
    # bearing updates need this many visible landmarks (two make the pose observable)
    min_update_landmarks: int = 2

    def __post_init__(self):
        self.process_noise = np.asarray(self.process_noise, dtype=float).reshape(2, 2)
        self.initial_cov = np.asarray(self.initial_cov, dtype=float).reshape(3, 3)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.bearing_noise_std < 0:
            raise ValueError("bearing noise std must be nonnegative")
        if np.any(np.linalg.eigvalsh(self.process_noise) < -1e-15):
            raise ValueError("process noise must be positive semidefinite")
        if self.v_nominal < 0:
            raise ValueError("the vehicle cannot move backwards")


def step_dynamics(s: VehicleState, u: ControlInput, dt: float, noise=None) -> VehicleState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    nv, nw = (0.0, 0.0) if noise is None else noise
    v = u.v + nv
    return VehicleState(s.x + v * math.cos(s.psi) * dt,
                        s.y + v * math.sin(s.psi) * dt,
                        wrap_angle(s.psi + (u.omega + nw) * dt))


def motion_jacobians(s: VehicleState, u: ControlInput, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """F = df/dstate and G = df/d(v, omega) of the Euler step."""
    c, sn = math.cos(s.psi), math.sin(s.psi)
    F = np.array([[1.0, 0.0, -u.v * sn * dt],
                  [0.0, 1.0, u.v * c * dt],
                  [0.0, 0.0, 1.0]])
    G = np.array([[c * dt, 0.0],
                  [sn * dt, 0.0],
                  [0.0, dt]])
    return F, G


def bearing(s: VehicleState, lm: Point2) -> float:
    return wrap_angle(math.atan2(lm[1] - s.y, lm[0] - s.x) - s.psi)


def bearing_jacobian(s: VehicleState, lm: Point2) -> np.ndarray:
    dx, dy = lm[0] - s.x, lm[1] - s.y
    q = dx * dx + dy * dy
    return np.array([dy / q, -dx / q, -1.0])


def measure_bearings(s: VehicleState, landmarks: Mapping[int, Point2], sensing_range: float,
                     sigma_b: float, rng: Optional[np.random.Generator]) -> List[Tuple[int, float]]:
    out = []
    for k in sorted(landmarks):
        lx, ly = landmarks[k]
        if math.hypot(lx - s.x, ly - s.y) < sensing_range:
            z = math.atan2(ly - s.y, lx - s.x) - s.psi
            if rng is not None and sigma_b > 0:
                z += rng.normal(0.0, sigma_b)
            out.append((k, wrap_angle(z)))
    return out


def _check_pd(omega: np.ndarray) -> None:
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise FilterDivergence("information matrix lost positive definiteness") from exc


def eif_predict(b: Belief, u: ControlInput, dt: float, Q: np.ndarray) -> Belief:
    _check_pd(b.info_matrix)
    mu = VehicleState(*b.mean)
    F, G = motion_jacobians(mu, u, dt)
    P = F @ b.cov @ F.T + G @ np.asarray(Q) @ G.T
    P = 0.5 * (P + P.T)
    mean = np.array(step_dynamics(mu, u, dt))
    omega = np.linalg.inv(P)
    omega = 0.5 * (omega + omega.T)
    return Belief(omega @ mean, omega, mean)


@dataclass
class UpdateStats:
    used: int = 0
    skipped: int = 0


def eif_update(b: Belief, meas: Sequence[Tuple[int, float]], landmarks: Mapping[int, Point2],
               sigma_b: float, stats: Optional[UpdateStats] = None) -> Belief:
    """Bearing update, all measurements linearised at the prior mean.

    Adds H^T H / sigma^2 to Omega and H^T (nu + H mu) / sigma^2 to xi, with the
    innovation nu wrapped to (-pi, pi].  A landmark on top of the estimate has
    no defined bearing and is skipped.
    """
    if not meas:
        return b
    mu = b.mean
    s = VehicleState(*mu)
    w = 1.0 / (sigma_b * sigma_b)
    d_omega = np.zeros((3, 3))
    d_grad = np.zeros(3)
    for k, z in meas:
        lm = landmarks[k]
        q = (lm[0] - s.x) ** 2 + (lm[1] - s.y) ** 2
        if q < 1e-12:
            if stats is not None:
                stats.skipped += 1
            continue
        H = bearing_jacobian(s, lm)
        nu = wrap_angle(z - bearing(s, lm))
        d_omega += w * np.outer(H, H)
        d_grad += w * H * nu
        if stats is not None:
            stats.used += 1
    omega = b.info_matrix + d_omega
    omega = 0.5 * (omega + omega.T)
    # xi + H^T (nu + H mu) w, solved around mu to keep the mean well conditioned
    mean = mu + np.linalg.solve(omega, d_grad)
    mean[2] = wrap_angle(mean[2])
    return Belief(omega @ mean, omega, mean)


def waypoint_controller(est: VehicleState, wp: Point2, gain: float, v_nominal: float,
                        omega_max: float) -> ControlInput:
    err = wrap_angle(math.atan2(wp[1] - est.y, wp[0] - est.x) - est.psi)
    return ControlInput(v_nominal, max(-omega_max, min(omega_max, gain * err)))


@dataclass
class Trace:
    dt: float
    true: np.ndarray          # (k, 3)
    est: np.ndarray           # (k, 3) posterior mean after the step's update
    cov_diag: np.ndarray      # (k, 3) posterior covariance diagonal
    cov_xy: np.ndarray        # (k,) posterior x-y covariance
    prior_cov_diag: np.ndarray  # (k, 3) covariance diagonal before the step's update
    n_visible: np.ndarray     # (k,)
    updated: np.ndarray       # (k,) bool, a bearing update was applied
    waypoint: np.ndarray      # (k,) index of the active waypoint
    omega: np.ndarray         # (k,)
    waypoints: List[Point2]
    landmarks: Dict[int, Point2]
    route_completed: bool = False
    status: str = "ok"
    skipped_updates: int = 0

    def __len__(self):
        return len(self.true)

    @property
    def two_visible_fraction(self) -> float:
        return float(np.mean(self.n_visible >= 2)) if len(self) else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for k in range(len(self)):
                w.writerow([k, f"{k * self.dt:.6g}",
                            *(f"{v:.9g}" for v in self.true[k]),
                            *(f"{v:.9g}" for v in self.est[k]),
                            *(f"{v:.9g}" for v in self.cov_diag[k]),
                            int(self.n_visible[k]), int(self.waypoint[k]), f"{self.omega[k]:.9g}"])


def waypoints_for(sol: Solution, inst: Instance) -> List[Point2]:
    return [inst.targets[v] for v in sol.visit_order]


def run_scenario(sol: Solution, inst: Instance, cfg: SimConfig) -> Trace:
    """Measure, update, steer from the estimate, move, predict; repeat."""
    rng = np.random.default_rng(cfg.rng_seed)
    rho = inst.sensing_range if cfg.sensing_range is None else cfg.sensing_range
    landmarks = {k: inst.candidate_sites[k] for k in sorted(sol.placed_sites)}
    wps = waypoints_for(sol, inst)
    q_std = np.sqrt(np.diag(cfg.process_noise))
    sigma_f = max(cfg.bearing_noise_std, SIGMA_FLOOR)

    sx, sy = cfg.start
    psi0 = math.atan2(wps[0].y - sy, wps[0].x - sx)
    true = VehicleState(sx, sy, wrap_angle(psi0))
    belief = Belief.from_moments(true.as_array(), cfg.initial_cov)
    ustats = UpdateStats()

    rows_true, rows_est, rows_cov, rows_cxy, rows_prior = [], [], [], [], []
    n_vis, updated, wp_idx, omegas = [], [], [], []
    wp = 0
    completed = False
    status = "ok"
    for _ in range(cfg.n_steps):
        est = belief.state
        while wp < len(wps) and math.hypot(wps[wp].x - est.x, wps[wp].y - est.y) < cfg.min_wp_distance:
            wp += 1
        if wp == len(wps):
            completed = True
            break
        prior_diag = np.diag(belief.cov).copy()
        meas = measure_bearings(true, landmarks, rho, cfg.bearing_noise_std, rng)
        did_update = False
        if status == "ok" and len(meas) >= cfg.min_update_landmarks:
            belief = eif_update(belief, meas, landmarks, sigma_f, ustats)
            did_update = True
        est = belief.state
        u = waypoint_controller(est, wps[wp], cfg.controller_gain, cfg.v_nominal, cfg.omega_max)

        rows_true.append(true)
        rows_est.append(belief.mean.copy())
        P = belief.cov
        rows_cov.append(np.diag(P).copy())
        rows_cxy.append(P[0, 1])
        rows_prior.append(prior_diag)
        n_vis.append(len(meas))
        updated.append(did_update)
        wp_idx.append(wp)
        omegas.append(u.omega)

        noise = rng.normal(0.0, 1.0, 2) * q_std
        true = step_dynamics(true, u, cfg.dt, noise)
        try:
            belief = eif_predict(belief, u, cfg.dt, cfg.process_noise)
        except FilterDivergence:
            # keep dead-reckoning the last good mean without further updates
            status = "diverged"
            belief = Belief(belief.info_vector, belief.info_matrix,
                            np.array(step_dynamics(belief.state, u, cfg.dt)))

    return Trace(
        dt=cfg.dt,
        true=np.array(rows_true, dtype=float).reshape(-1, 3),
        est=np.array(rows_est, dtype=float).reshape(-1, 3),
        cov_diag=np.array(rows_cov, dtype=float).reshape(-1, 3),
        cov_xy=np.array(rows_cxy, dtype=float),
        prior_cov_diag=np.array(rows_prior, dtype=float).reshape(-1, 3),
        n_visible=np.array(n_vis, dtype=int),
        updated=np.array(updated, dtype=bool),
        waypoint=np.array(wp_idx, dtype=int),
        omega=np.array(omegas, dtype=float),
        waypoints=wps,
        landmarks=landmarks,
        route_completed=completed,
        status=status,
        skipped_updates=ustats.skipped,
    )


@dataclass
class ErrorReport:
    errors: np.ndarray   # (k, 3) true minus estimate, heading wrapped
    sigma3: np.ndarray   # (k, 3)
    containment: np.ndarray  # per axis fraction of steps with |error| <= 3 sigma
    rmse: np.ndarray     # per axis

    @property
    def position_rmse(self) -> float:
        return float(np.sqrt(np.mean(self.errors[:, 0] ** 2 + self.errors[:, 1] ** 2)))

    def summary(self) -> dict:
        return {
            "rmse_x": float(self.rmse[0]),
            "rmse_y": float(self.rmse[1]),
            "rmse_psi": float(self.rmse[2]),
            "rmse_position": self.position_rmse,
            "containment_x": float(self.containment[0]),
            "containment_y": float(self.containment[1]),
            "containment_psi": float(self.containment[2]),
        }


def error_stats(t: Trace) -> ErrorReport:
    if len(t) == 0:
        raise ValueError("trace has no steps")
    err = t.true - t.est
    err[:, 2] = wrap_angles(err[:, 2])
    sigma3 = 3.0 * np.sqrt(np.maximum(t.cov_diag, 0.0))
    inside = np.abs(err) <= sigma3
    return ErrorReport(err, sigma3, inside.mean(axis=0), np.sqrt(np.mean(err ** 2, axis=0)))


def trace_summary(t: Trace) -> dict:
    rep = error_stats(t)
    out = rep.summary()
    out.update({
        "steps": len(t),
        "route_completed": t.route_completed,
        "waypoints_reached": int(t.waypoint[-1]) + (1 if t.route_completed else 0),
        "n_waypoints": len(t.waypoints),
        "two_visible_fraction": t.two_visible_fraction,
        "status": t.status,
        "skipped_updates": t.skipped_updates,
    })
    return out


def run_seed(seed: int, run: int) -> int:
    """Per-run stream derived from (seed, run index)."""
    return int(np.random.SeedSequence([seed, run]).generate_state(1)[0])
