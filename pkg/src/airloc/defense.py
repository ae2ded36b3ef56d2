"""Anomaly filters over calibrated range matrices and spoofer localization.

Range matrices are K x N (rounds x links) in meters. A verdict marks each
entry clean or flagged; flagged entries are later replaced by per-column
interpolation from the clean ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .channel import SPEED_OF_LIGHT
from .localization import RDEF_GD, GdConfig, gd_localize

TOLERANCE_K = 1.97


@dataclass
class FilterVerdict:
    clean_mask: np.ndarray
    spoofed_entries: list
    filled_ranges: np.ndarray
    position_track: np.ndarray | None = None
    dropped_columns: tuple = ()
    low_confidence: tuple = ()

    @property
    def flagged_mask(self) -> np.ndarray:
        return ~self.clean_mask

    @property
    def n_flagged(self) -> int:
        return int((~self.clean_mask).sum())

    def to_csv(self, path) -> None:
        k_rounds, n_links = self.clean_mask.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "link", "flagged", "filled_range"])
            for k in range(k_rounds):
                for n in range(n_links):
                    w.writerow([k, n, int(not self.clean_mask[k, n]), repr(float(self.filled_ranges[k, n]))])


def interpolate_missing(d_hat_clean) -> tuple[np.ndarray, tuple]:
    """Fill NaN gaps column by column; edges hold the nearest clean value.

    Returns the filled matrix and the indices of columns with no clean
    entry at all, which stay NaN and must be left out of localization.
    """
    d = np.array(d_hat_clean, dtype=float)
    k = np.arange(d.shape[0])
    dropped = []
    for n in range(d.shape[1]):
        ok = np.isfinite(d[:, n])
        if not ok.any():
            dropped.append(n)
            continue
        if not ok.all():
            d[:, n] = np.interp(k, k[ok], d[ok, n])
    return d, tuple(dropped)


def _verdict(d_hat, flagged, track=None, low_conf=()) -> FilterVerdict:
    d_hat = np.asarray(d_hat, dtype=float)
    flagged = flagged | ~np.isfinite(d_hat)
    clean = ~flagged
    entries = [(int(k), int(n), float(d_hat[k, n])) for k, n in zip(*np.nonzero(flagged))]
    filled, dropped = interpolate_missing(np.where(clean, d_hat, np.nan))
    return FilterVerdict(clean, entries, filled, track, dropped, tuple(low_conf))


def no_filter(d_hat) -> FilterVerdict:
    d_hat = np.asarray(d_hat, dtype=float)
    return _verdict(d_hat, np.zeros(d_hat.shape, dtype=bool))


def tcv_flags(d_hat, node_positions, sigma_snr) -> np.ndarray:
    d_hat = np.atleast_2d(np.asarray(d_hat, dtype=float))
    nodes = np.asarray(node_positions, dtype=float)
    sig = np.asarray(sigma_snr, dtype=float)
    if d_hat.shape[1] < 2:
        raise ValueError("need at least two links")
    dij = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    eps = TOLERANCE_K * (sig[:, None] + sig[None, :])
    di = d_hat[:, :, None]
    dj = d_hat[:, None, :]
    bad = (dij[None] < np.abs(di - dj) - eps[None]) | (dij[None] > di + dj + eps[None])
    np.einsum("kii->ki", bad)[:] = False
    return bad.any(axis=2)


def filter_tcv(d_hat, node_positions, sigma_snr) -> FilterVerdict:
    """Triangle-consistency check over every node pair in each round."""
    return _verdict(d_hat, tcv_flags(d_hat, node_positions, sigma_snr))


def sdet_flags(d_hat, ref_pos, node_positions, sigma_snr, sigma_gnss, scale=1.0) -> np.ndarray:
    d_bs = np.linalg.norm(np.asarray(node_positions, dtype=float) - np.asarray(ref_pos, dtype=float), axis=1)
    eps = TOLERANCE_K * (np.asarray(sigma_snr, dtype=float) + scale * sigma_gnss)
    return np.abs(np.asarray(d_hat, dtype=float) - d_bs) > eps


def filter_sdet(d_hat, gnss_pos, node_positions, sigma_snr, sigma_gnss: float,
                beta_t: float = 1.0) -> FilterVerdict:
    """Static distance check of every entry against the GNSS-implied range."""
    if sigma_gnss <= 0:
        raise ValueError("sigma_gnss must be positive")
    return _verdict(d_hat, sdet_flags(d_hat, gnss_pos, node_positions, sigma_snr, sigma_gnss, beta_t))


def filter_rdef(obs_batches, gnss_pos, node_positions, uav_velocity, gd_config: GdConfig = RDEF_GD,
                beta_t: float = 0.97, *, sigma_snr, sigma_gnss: float, interval_s: float,
                min_links: int = 3) -> FilterVerdict:
    """Recursive detection and estimation over time-step batches.

    Batch b is checked against a baseline position with tolerance
    1.97 (sigma_n + beta_t**b sigma_gnss); the baseline is GNSS for b = 0
    and afterwards the previous estimate advanced by the reported
    velocity. Each batch's clean entries refine the estimate by a short
    warm-started descent. A batch with fewer than ``min_links`` usable
    links cannot fix a position; it is dead-reckoned and marked low
    confidence.
    """
    if not 0 < beta_t <= 1:
        raise ValueError("beta_t must lie in (0, 1]")
    if sigma_gnss <= 0:
        raise ValueError("sigma_gnss must be positive")
    batches = [np.atleast_2d(np.asarray(b, dtype=float)) for b in obs_batches]
    nodes = np.asarray(node_positions, dtype=float)
    vel = np.asarray(uav_velocity, dtype=float)
    base = np.asarray(gnss_pos, dtype=float)
    flags, track, low_conf = [], [], []
    for b, batch in enumerate(batches):
        if b > 0:
            base = track[-1] + vel * interval_s
        f = sdet_flags(batch, base, nodes, sigma_snr, sigma_gnss, beta_t**b)
        f |= ~np.isfinite(batch)
        flags.append(f)
        cols = ~f.all(axis=0)
        if cols.sum() < max(min_links, 1):
            track.append(base.copy())
            low_conf.append(b)
            continue
        d_mean = np.nanmean(np.where(f, np.nan, batch)[:, cols], axis=0)
        est = gd_localize(nodes[cols], d_mean, base, gd_config).position
        track.append(est)
    return _verdict(np.vstack(batches), np.vstack(flags), np.array(track), low_conf)


def radial_velocity(spoofed_times, interval_s: float) -> float:
    """c times the mean consecutive difference of spoofed arrival times, per interval."""
    t = np.asarray(spoofed_times, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two consecutive spoofed entries")
    return float(SPEED_OF_LIGHT * np.mean(np.diff(t)) / interval_s)


def consecutive_runs(mask_column) -> list[tuple[int, int]]:
    """(start, stop) index pairs of True runs in a boolean vector."""
    m = np.concatenate([[False], np.asarray(mask_column, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(int)))
    return list(zip(edges[::2], edges[1::2]))


def _link_runs(observed_s, flagged, interval_s, max_speed):
    """Longest flagged run (>= 2 entries) per link whose implied speed passes the gate."""
    out = {}
    for n in range(observed_s.shape[1]):
        runs = [r for r in consecutive_runs(flagged[:, n]) if r[1] - r[0] >= 2]
        if not runs:
            continue
        a, b = max(runs, key=lambda r: r[1] - r[0])
        if abs(radial_velocity(observed_s[a:b, n], interval_s)) <= max_speed:
            out[n] = (a, b)
    return out


def link_radial_velocities(observed_s, flagged, interval_s: float, max_speed: float = 60.0) -> dict:
    """Radial speed per link from its longest run of >= 2 consecutive flagged entries.

    Runs whose implied speed exceeds ``max_speed`` are discarded: a jump
    means the reported pulse changed between rounds. Returns {link: speed}.
    """
    runs = _link_runs(observed_s, flagged, interval_s, max_speed)
    return {n: radial_velocity(observed_s[a:b, n], interval_s) for n, (a, b) in runs.items()}


def session_radial_velocity(observed_s, flagged, interval_s: float, max_speed: float = 60.0):
    """Session radial speed: mean of every consecutive difference in the qualifying runs.

    Pooling the differences weights each link by its run length. Returns
    None when no link qualifies.
    """
    runs = _link_runs(observed_s, flagged, interval_s, max_speed)
    if not runs:
        return None
    diffs = np.concatenate([np.diff(observed_s[a:b, n]) for n, (a, b) in runs.items()])
    return float(SPEED_OF_LIGHT * diffs.mean() / interval_s)


@dataclass
class SpooferLocProblem:
    uav_positions: np.ndarray
    uav_velocities: np.ndarray
    radial_velocities: np.ndarray
    initial_guess: np.ndarray | None = None

    def __post_init__(self):
        self.uav_positions = np.atleast_2d(np.asarray(self.uav_positions, dtype=float))
        self.uav_velocities = np.atleast_2d(np.asarray(self.uav_velocities, dtype=float))
        self.radial_velocities = np.atleast_1d(np.asarray(self.radial_velocities, dtype=float))
        m = len(self.radial_velocities)
        if m < 1:
            raise ValueError("need at least one entry")
        if self.uav_positions.shape != (m, 3) or self.uav_velocities.shape != (m, 3):
            raise ValueError("positions and velocities must be M x 3")
        if not np.all(np.isfinite(self.uav_velocities)):
            raise ValueError("velocities must be finite")
        if self.initial_guess is None:
            self.initial_guess = self.uav_positions.mean(axis=0)

    def residuals(self, p) -> np.ndarray:
        diff = self.uav_positions - np.asarray(p, dtype=float)
        r = np.linalg.norm(diff, axis=1)
        pred = np.einsum("ij,ij->i", self.uav_velocities, diff) / np.maximum(r, 1e-9)
        return self.radial_velocities - pred

    def cost(self, p) -> float:
        return float(np.sum(self.residuals(p) ** 2))


@dataclass
class SpooferEstimate:
    position: np.ndarray
    residual: float
    ill_conditioned: bool
    initial_residual: float = field(default=np.nan)


def localize_spoofer(problem: SpooferLocProblem, gd_config: GdConfig | None = None,
                     max_nfev: int = 200) -> SpooferEstimate:
    """Fit the stationary spoofer position to the measured radial speeds.

    By default a damped Gauss-Newton (trust region) solve started at the
    centroid of the UAV positions. With ``gd_config`` a normalized-step
    gradient descent with step decay is used instead. Fewer than three
    entries, or a rank-deficient Jacobian at the solution, marks the
    estimate ill-conditioned.
    """
    x0 = np.asarray(problem.initial_guess, dtype=float)
    c0 = problem.cost(x0)
    if gd_config is None:
        sol = least_squares(problem.residuals, x0, method="trf", x_scale="jac", max_nfev=max_nfev)
        p, jac = sol.x, sol.jac
    else:
        p = _spoofer_gd(problem, x0, gd_config)
        jac = _residual_jacobian(problem, p)
    c1 = problem.cost(p)
    if not np.isfinite(c1) or c1 > c0:
        p, c1 = x0, c0
    rank = np.linalg.matrix_rank(jac, tol=1e-8 * max(1.0, np.abs(jac).max()))
    ill = len(problem.radial_velocities) < 3 or rank < 3
    return SpooferEstimate(p, c1, bool(ill), c0)


def _residual_jacobian(problem: SpooferLocProblem, p) -> np.ndarray:
    """d r_m / d p for r_m = v_s - v.(p_m - p)/|p_m - p|."""
    diff = problem.uav_positions - p
    r = np.maximum(np.linalg.norm(diff, axis=1), 1e-9)
    u = diff / r[:, None]
    vu = np.einsum("ij,ij->i", problem.uav_velocities, u)
    # d/dp of v.u = -(v - (v.u) u) / r
    return (problem.uav_velocities - vu[:, None] * u) / r[:, None]


def _spoofer_gd(problem: SpooferLocProblem, x0, cfg: GdConfig) -> np.ndarray:
    p = x0.copy()
    alpha = cfg.learning_rate
    c_prev = problem.cost(p)
    for _ in range(cfg.max_iter):
        g = 2.0 * _residual_jacobian(problem, p).T @ problem.residuals(p)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        p = p - alpha * g / gn
        c = problem.cost(p)
        if c > c_prev:
            alpha *= cfg.discount
        if c > 0 and abs((c - c_prev) / c) < cfg.convergence_threshold:
            break
        c_prev = c
    return p
