"""Node ranking (LMF and UE modes), the F_theta objective and ROF node-count selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .channel import H_MAX, H_MIN, ChannelParams, fspl_1m_db, mean_eta
from .geometry import Deployment


@dataclass(frozen=True)
class RankedCandidates:
    order: np.ndarray
    scores: np.ndarray  # ranking keys along ``order``, non-decreasing
    mode: str

    def __post_init__(self):
        if self.mode not in ("lmf", "ue"):
            raise ValueError(f"unknown ranking mode {self.mode!r}")

    def top(self, n: int) -> np.ndarray:
        return self.order[:n]


def rank_lmf(gnss_pos, deployment: Deployment) -> RankedCandidates:
    """Ascending 3D distance from the GNSS position; ties keep index order."""
    gnss_pos = np.asarray(gnss_pos, dtype=float)
    if not np.all(np.isfinite(gnss_pos)):
        raise ValueError("gnss_pos must be finite")
    d = np.linalg.norm(deployment.nodes - gnss_pos, axis=1)
    order = np.argsort(d, kind="stable")
    return RankedCandidates(order, d[order], "lmf")


def rank_ue(snr_db) -> RankedCandidates:
    """Descending SNR; scores are negated SNR so they increase along the order."""
    snr = np.asarray(snr_db, dtype=float)
    if not np.all(np.isfinite(snr)):
        raise ValueError("snr values must be finite")
    order = np.argsort(-snr, kind="stable")
    return RankedCandidates(order, -snr[order], "ue")


def phi_values(d2d, h, eta) -> np.ndarray:
    """phi = (d2d^2 + h^2)^(eta/4) = d3d^(eta/2)."""
    d2d = np.asarray(d2d, dtype=float)
    return (d2d**2 + h * h) ** (np.asarray(eta, dtype=float) / 4.0)


def objective(phi_prefix, n: int) -> float:
    """F(n) = Phi(n)^2 / n^3 with ``phi_prefix[n-1] = Phi(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(phi_prefix[n - 1] ** 2 / n**3)


def objective_curve(phi) -> np.ndarray:
    cap = np.cumsum(np.asarray(phi, dtype=float))
    n = np.arange(1, len(cap) + 1)
    return cap**2 / n**3


def t2_statistic(phi, n: int) -> float:
    """F(n) - F(n-1); negative while adding node n still lowers the objective."""
    if n < 2:
        raise ValueError("n must be >= 2")
    cap = np.cumsum(np.asarray(phi, dtype=float))
    return objective(cap, n) - objective(cap, n - 1)


class EtaTable:
    """Mean path-loss exponent tabulated over (d2d, h) with bilinear lookup."""

    def __init__(self, d2d_max: float = 1000.0, d2d_step: float = 5.0, h_step: float = 1.0,
                 p_los_offset: float = 0.0):
        self.d2d = np.arange(0.0, d2d_max + d2d_step, d2d_step)
        self.h = np.arange(H_MIN, H_MAX + h_step / 2, h_step)
        dd, hh = np.meshgrid(self.d2d, self.h, indexing="ij")
        from .channel import apply_los_offset, los_probability

        p = apply_los_offset(los_probability(dd, hh), p_los_offset)
        self.values = mean_eta(dd, hh, p)
        self._interp = RegularGridInterpolator((self.d2d, self.h), self.values)

    def __call__(self, d2d, h):
        d2d = np.clip(np.asarray(d2d, dtype=float), self.d2d[0], self.d2d[-1])
        h = np.clip(np.broadcast_to(np.asarray(h, dtype=float), d2d.shape), self.h[0], self.h[-1])
        return self._interp(np.stack([d2d, h], axis=-1))


def rssi_range(snr_db, h: float, eta_table: EtaTable, params: ChannelParams = ChannelParams(),
               n_grid: int = 2000) -> np.ndarray:
    """Invert the mean-exponent SNR law for the implied 3D range (>= h)."""
    h = float(np.clip(h, H_MIN, H_MAX))
    d2d = np.linspace(0.0, eta_table.d2d[-1], n_grid)
    d3d = np.hypot(d2d, h)
    snr = params.link_budget_db - fspl_1m_db(params.carrier_freq_hz) - 10.0 * eta_table(d2d, h) * np.log10(d3d)
    # snr falls monotonically with range; np.interp wants ascending x
    return np.interp(np.asarray(snr_db, dtype=float), snr[::-1], d3d[::-1])


@dataclass
class SelectionDiagnostics:
    phi: np.ndarray
    capital_phi: np.ndarray
    f_theta: np.ndarray
    t2: np.ndarray  # t2[0] is NaN (undefined for n = 1)
    n_opt: int
    n_raw: int = 0
    n_compensated: int = 0
    clamped_range: np.ndarray | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "phi", "Phi", "F_theta", "T2"])
            for i in range(len(self.phi)):
                w.writerow([i + 1, repr(float(self.phi[i])), repr(float(self.capital_phi[i])),
                            repr(float(self.f_theta[i])), repr(float(self.t2[i]))])


def _count_negative(t2) -> int:
    # n = 1 always counts: a single node improves on none
    return 1 + int(np.sum(t2[1:] < 0))


def rof_select(ranked: RankedCandidates, h: float, eta_table: EtaTable, n_max: int,
               d_r) -> SelectionDiagnostics:
    """Adaptive node count from RSSI-implied ranges.

    ``d_r`` is indexed by node; the first ``n_max`` nodes of ``ranked`` are
    evaluated in rank order.
    """
    if n_max < 3:
        raise ValueError("n_max must be >= 3")
    d_r = np.asarray(d_r, dtype=float)
    idx = ranked.order[:n_max]
    r = d_r[idx]
    if ranked.mode == "ue":
        r = np.sort(r)
    short = r < h
    d2d = np.sqrt(np.maximum(r**2 - h * h, 0.0))
    eta = eta_table(d2d, h)
    phi = phi_values(d2d, h, eta)
    cap = np.cumsum(phi)
    f = objective_curve(phi)
    t2 = np.concatenate([[np.nan], np.diff(f)])
    n_raw = _count_negative(t2)
    mean_t2 = np.nanmean(t2) if len(t2) > 1 else 0.0
    if mean_t2 >= 0:
        t2c = t2 - np.sqrt(mean_t2)
    else:
        t2c = t2 + np.sqrt(abs(mean_t2))
    n_comp = _count_negative(t2c)
    n_opt = int(np.floor(n_raw / 2 + n_comp / 2 + 0.5))  # half-up rounding
    n_opt = min(len(idx), min(n_max, max(n_opt, 3)))
    return SelectionDiagnostics(phi, cap, f, t2, n_opt, n_raw, n_comp, short)
