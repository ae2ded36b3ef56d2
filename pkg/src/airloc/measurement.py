"""TDOA observation synthesis, LMF clock calibration and leading-edge resolution."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelParams, sample_links
from .geometry import Deployment


@dataclass(frozen=True)
class TdoaObservationMatrix:
    """K x N timing matrices for one localization session.

    ``observed_s`` may contain NaN for entries where detection failed.
    ``positions`` holds the true UAV position per round (K x 3).
    """

    true_toa_s: np.ndarray
    clock_offsets_s: np.ndarray
    delays_s: np.ndarray
    received_s: np.ndarray
    observed_s: np.ndarray
    spoof_mask: np.ndarray
    interval_s: float
    node_index: np.ndarray
    positions: np.ndarray

    @property
    def rounds(self) -> int:
        return self.true_toa_s.shape[0]

    @property
    def n_links(self) -> int:
        return self.true_toa_s.shape[1]

    def with_observed(self, observed: np.ndarray, spoof_mask: np.ndarray) -> "TdoaObservationMatrix":
        return replace(self, observed_s=observed, spoof_mask=spoof_mask)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "node", "true", "received", "observed", "spoofed"])
            for k in range(self.rounds):
                for j in range(self.n_links):
                    w.writerow([
                        k, int(self.node_index[j]),
                        repr(float(self.true_toa_s[k, j])),
                        repr(float(self.received_s[k, j])),
                        repr(float(self.observed_s[k, j])),
                        int(self.spoof_mask[k, j]),
                    ])


def uav_track(uav: np.ndarray, k_rounds: int, interval_s: float, velocity=None) -> np.ndarray:
    """Per-round UAV positions under constant velocity (K x 3)."""
    uav = np.asarray(uav, dtype=float)
    if velocity is None:
        return np.repeat(uav[None, :], k_rounds, axis=0)
    t = np.arange(k_rounds)[:, None] * interval_s
    return uav[None, :] + t * np.asarray(velocity, dtype=float)[None, :]


def synthesize(
    uav,
    deployment: Deployment,
    selected: Sequence[int],
    params: ChannelParams,
    k_rounds: int,
    interval_s: float,
    rng: np.random.Generator,
    *,
    links: dict | None = None,
    velocity=None,
    nlos_excess: float = 0.0,
) -> TdoaObservationMatrix:
    """Draw a K x N observation matrix for the selected nodes.

    ``links`` carries per-node channel draws (``sigma_m`` and ``is_los``
    arrays aligned with ``selected``); when omitted they are sampled here.
    ``nlos_excess`` scales an extra Uniform(0, tau_max) delay applied to
    NLOS links on every round.
    """
    if k_rounds < 1:
        raise ValueError("k_rounds must be >= 1")
    selected = np.asarray(selected, dtype=int)
    if selected.size == 0:
        raise ValueError("selected must be nonempty")
    nodes = deployment.nodes[selected]
    track = uav_track(uav, k_rounds, interval_s, velocity)
    if links is None:
        d2d = np.hypot(*(nodes[:, :2] - track[0, :2]).T)
        links = sample_links(d2d, track[0, 2], rng, params, dz=track[0, 2] - nodes[:, 2])
    sigma_s = np.asarray(links["sigma_m"], dtype=float) / SPEED_OF_LIGHT
    n = len(selected)

    true_toa = np.linalg.norm(track[:, None, :] - nodes[None, :, :], axis=2) / SPEED_OF_LIGHT
    offsets = rng.normal(0.0, params.sync_error_s, size=n)
    delays = rng.normal(0.0, 1.0, size=(k_rounds, n)) * sigma_s[None, :]
    if nlos_excess > 0:
        nlos = ~np.asarray(links["is_los"], dtype=bool)
        excess = rng.uniform(0.0, nlos_excess * params.max_delay_spread_s, size=(k_rounds, n))
        delays = delays + excess * nlos[None, :]
    received = true_toa + offsets[None, :] + delays
    return TdoaObservationMatrix(
        true_toa_s=true_toa,
        clock_offsets_s=offsets,
        delays_s=delays,
        received_s=received,
        observed_s=received.copy(),
        spoof_mask=np.zeros((k_rounds, n), dtype=bool),
        interval_s=interval_s,
        node_index=selected,
        positions=track,
    )


def estimate_offsets(obs: TdoaObservationMatrix, rng: np.random.Generator, residual_s: float) -> np.ndarray:
    """LMF clock-offset estimate: true offsets plus Gaussian residual."""
    return obs.clock_offsets_s + rng.normal(0.0, residual_s, size=obs.n_links)


def calibrate(obs: TdoaObservationMatrix, offsets_estimate) -> np.ndarray:
    """Per-link range estimates c * (observed - offset)."""
    offsets_estimate = np.asarray(offsets_estimate, dtype=float)
    if offsets_estimate.shape != (obs.n_links,):
        raise ValueError(f"offsets_estimate must have length {obs.n_links}")
    return SPEED_OF_LIGHT * (obs.observed_s - offsets_estimate[None, :])


@dataclass(frozen=True)
class PeakEvent:
    arrival_s: float
    power_dbm: float
    origin: str = "authentic"  # or "spoof"

    def __post_init__(self):
        if not math.isfinite(self.power_dbm):
            raise ValueError("peak power must be finite")
        if self.origin not in ("authentic", "spoof"):
            raise ValueError(f"unknown peak origin {self.origin!r}")


def merge_peaks(peaks: Iterable[PeakEvent], l_s: float) -> list[list[PeakEvent]]:
    """Group time-sorted peaks into composites; neighbours closer than ``l_s`` fuse."""
    ordered = sorted(peaks, key=lambda p: (p.arrival_s, -p.power_dbm))
    groups: list[list[PeakEvent]] = []
    for p in ordered:
        if groups and p.arrival_s - groups[-1][-1].arrival_s < l_s:
            groups[-1].append(p)
        else:
            groups.append([p])
    return groups


def resolve_leading_edge(peaks: Sequence[PeakEvent], l_m: float, l_s: float,
                         threshold_rel_db: float) -> float:
    """Reported arrival time of the first significant correlation peak.

    Peaks weaker than ``max power + threshold_rel_db`` are discarded (a peak
    exactly at the threshold is kept). Survivors closer than ``l_s`` fuse
    into a composite reported at its earliest member. Returns NaN when
    nothing is detected.
    """
    if l_s < l_m:
        raise ValueError("l_s must be >= l_m")
    peaks = list(peaks)
    if not peaks:
        raise ValueError("peaks must be nonempty")
    floor = max(p.power_dbm for p in peaks) + threshold_rel_db
    kept = [p for p in peaks if p.power_dbm >= floor]
    if not kept:
        return math.nan
    groups = merge_peaks(kept, l_s)
    return min(g[0].arrival_s for g in groups)
