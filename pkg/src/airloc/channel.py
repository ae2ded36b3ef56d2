"""UMi-AV air-to-ground channel statistics.

LOS probability, the mean path-loss exponent and its derivatives over
horizontal distance, per-link SNR and the SNR to ranging-error mapping.
All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

H_MIN = 20.0
H_MAX = 120.0

# two-point exponent coefficients: eta = a - b*log10(h)
LOS_A, LOS_B = 2.225, 0.05
NLOS_A, NLOS_B = 4.32, 0.76


class OutOfEnvelopeError(ValueError):
    """Raised when an altitude is outside the validated [20, 120] m range."""


@dataclass(frozen=True)
class ChannelParams:
    carrier_freq_hz: float = 3.5e9
    tx_power_dbm: float = 15.0
    noise_floor_dbm: float = -91.0
    bandwidth_hz: float = 10e6
    rician_k_range: tuple[float, float] = (0.1, 3.0)
    multipath_count: int = 4
    max_delay_spread_s: float = 2e-7
    sync_error_s: float = 1e-6

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.tx_power_dbm <= self.noise_floor_dbm:
            raise ValueError("tx_power_dbm must exceed noise_floor_dbm")
        lo, hi = self.rician_k_range
        if not (0 < lo <= hi):
            raise ValueError("rician_k_range must be a nonempty interval with lower bound > 0")

    @property
    def link_budget_db(self) -> float:
        return self.tx_power_dbm - self.noise_floor_dbm


@dataclass(frozen=True)
class LinkProfile:
    d2d_m: float
    d3d_m: float
    altitude_m: float
    is_los: bool
    eta: float
    snr_db: float
    range_sigma_m: float


def _check_envelope(h):
    h = np.asarray(h, dtype=float)
    if np.any(h < H_MIN) or np.any(h > H_MAX) or np.any(~np.isfinite(h)):
        raise OutOfEnvelopeError(f"altitude outside [{H_MIN}, {H_MAX}] m: {h}")
    return h


def d1_p1(h):
    """Breakpoint distance d1 and decay scale p1 for altitude ``h`` (m)."""
    h = _check_envelope(h)
    lh = np.log10(h)
    d1 = np.maximum(294.05 * lh - 432.94, 18.0)
    p1 = 233.98 * lh - 0.95
    return d1, p1


def los_probability(d2d, h):
    """LOS probability; 1 inside the breakpoint, exponential-plus-hyperbolic tail beyond."""
    d2d = np.asarray(d2d, dtype=float)
    if np.any(d2d < 0):
        raise ValueError("d2d must be non-negative")
    d1, p1 = d1_p1(h)
    safe = np.maximum(d2d, 1e-300)
    tail = (1.0 - d1 / safe) * np.exp(-d2d / p1) + d1 / safe
    return np.where(d2d <= d1, 1.0, tail)


def los_eta(h):
    return LOS_A - LOS_B * np.log10(_check_envelope(h))


def nlos_eta(h):
    return NLOS_A - NLOS_B * np.log10(_check_envelope(h))


def mean_eta(d2d, h, p_los=None):
    """Composite average path-loss exponent.

    ``p_los`` may be supplied to evaluate with a modified LOS probability
    (used by LOS-offset campaigns); by default it comes from
    :func:`los_probability`.
    """
    if p_los is None:
        p_los = los_probability(d2d, h)
    return nlos_eta(h) * (1.0 - p_los) + los_eta(h) * p_los


def eta_derivatives(d2d, h):
    """First and second derivative of :func:`mean_eta` with respect to d2d.

    Both vanish inside the breakpoint. Beyond it the exact derivatives of
    the composite exponent are returned.
    """
    d = np.asarray(d2d, dtype=float)
    d1, p1 = d1_p1(h)
    slope = los_eta(h) - nlos_eta(h)  # negative on the whole envelope
    ds = np.maximum(d, d1)  # A1 entries are masked below
    e = np.exp(-ds / p1)
    dp = (d1 / ds**2 - (1.0 - d1 / ds) / p1) * e - d1 / ds**2
    ddp = (
        e * (-2.0 * d1 / ds**3 - 2.0 * d1 / (ds**2 * p1) + (ds - d1) / (p1**2 * ds))
        + 2.0 * d1 / ds**3
    )
    in_a1 = d <= d1
    return np.where(in_a1, 0.0, slope * dp), np.where(in_a1, 0.0, slope * ddp)


def fspl_1m_db(carrier_freq_hz: float) -> float:
    """Free-space loss over the 1 m reference distance."""
    return 20.0 * np.log10(4.0 * np.pi * carrier_freq_hz / SPEED_OF_LIGHT)


def link_snr(d3d, eta, params: ChannelParams = ChannelParams()):
    """Log-distance SNR (dB) anchored at a 1 m free-space reference."""
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d < 1.0):
        raise ValueError("d3d must be at least 1 m")
    return (
        params.link_budget_db
        - fspl_1m_db(params.carrier_freq_hz)
        - 10.0 * np.asarray(eta) * np.log10(d3d)
    )


def range_sigma(snr_db, bandwidth_hz: float):
    """Ranging standard deviation (m) from the TDOA Fisher information.

    sigma_d = sqrt(c / (8 pi^2 SNR gamma beta^2)) with whitening gain
    gamma = ln(beta)/beta.
    """
    if bandwidth_hz <= np.e:
        raise ValueError("bandwidth must exceed e Hz so that ln(beta) > 1")
    snr_lin = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    gamma = np.log(bandwidth_hz) / bandwidth_hz
    return np.sqrt(SPEED_OF_LIGHT / (8.0 * np.pi**2 * snr_lin * gamma * bandwidth_hz**2))


def apply_los_offset(p_los, delta):
    """Shift a LOS probability by ``delta`` and clamp to [0, 1]."""
    if np.any(np.abs(np.asarray(delta)) > 1.0):
        raise ValueError("delta must lie in [-1, 1]")
    return np.clip(np.asarray(p_los, dtype=float) + delta, 0.0, 1.0)


def sample_links(
    d2d,
    h,
    rng: np.random.Generator,
    params: ChannelParams = ChannelParams(),
    dz=None,
    los_offset: float = 0.0,
):
    """Vectorised link draw.

    Returns a dict of arrays (``d2d``, ``d3d``, ``dz``, ``p_los``, ``is_los``,
    ``eta``, ``snr_db``, ``sigma_m``). ``h`` is the UAV altitude used by the
    channel statistics; ``dz`` is the vertical separation used for the
    3D distance (defaults to ``h``).
    """
    d2d = np.atleast_1d(np.asarray(d2d, dtype=float))
    dz = np.full_like(d2d, float(h)) if dz is None else np.broadcast_to(dz, d2d.shape).astype(float)
    p_los = apply_los_offset(los_probability(d2d, h), los_offset)
    is_los = rng.random(d2d.shape) < p_los
    eta = np.where(is_los, los_eta(h), nlos_eta(h))
    d3d = np.maximum(np.hypot(d2d, dz), 1.0)
    snr = link_snr(d3d, eta, params)
    return {
        "d2d": d2d,
        "d3d": d3d,
        "dz": dz,
        "p_los": p_los,
        "is_los": is_los,
        "eta": eta,
        "snr_db": snr,
        "sigma_m": range_sigma(snr, params.bandwidth_hz),
    }


def sample_link(d2d: float, h: float, rng: np.random.Generator,
                params: ChannelParams = ChannelParams(), dz: float | None = None) -> LinkProfile:
    """Draw one link's LOS state and derive its exponent, SNR and ranging sigma."""
    s = sample_links([d2d], h, rng, params, dz=None if dz is None else [dz])
    return LinkProfile(
        d2d_m=float(s["d2d"][0]),
        d3d_m=float(s["d3d"][0]),
        altitude_m=float(s["dz"][0]),
        is_los=bool(s["is_los"][0]),
        eta=float(s["eta"][0]),
        snr_db=float(s["snr_db"][0]),
        range_sigma_m=float(s["sigma_m"][0]),
    )
