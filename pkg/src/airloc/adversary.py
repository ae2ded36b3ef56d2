"""Merged-peak spoofing: timing model, success probabilities, attack planning.

Times are seconds throughout. The authentic pulse reaches the UE at
``t_r = tau_u``; the UE observation instant ``t_ob`` and the spoofer clock
error are uniform over their symmetric synchronisation windows. A spoof
pulse succeeds when it lands in the merge window just ahead of ``t_r``
so that the composite peak's leading edge is its own.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .channel import SPEED_OF_LIGHT
from .measurement import TdoaObservationMatrix

STRATEGIES = ("focused", "global", "selective")


@dataclass(frozen=True)
class SpoofTimingModel:
    delta_u_s: float = 1e-6
    delta_sp_s: float = 1e-6
    tau_u_s: float = 2e-7
    tau_sp_s: float = 1e-7
    l_m_s: float = 5e-8
    alpha_sep: float = 2.0
    lead_s: float = 0.0
    n_pulses: int = 1

    def __post_init__(self):
        for name in ("delta_u_s", "delta_sp_s", "tau_u_s", "tau_sp_s", "l_m_s", "lead_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.delta_sp_s <= 0 or self.l_m_s <= 0:
            raise ValueError("delta_sp_s and l_m_s must be positive")
        if self.alpha_sep < 1:
            raise ValueError("alpha_sep must be >= 1")
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if self.delta_u_s <= self.l_s + self.l_m_s:
            raise ValueError("delta_u_s must exceed l_s + l_m")

    @property
    def l_s(self) -> float:
        return self.alpha_sep * self.l_m_s

    def pulse_offsets(self) -> np.ndarray:
        """Send offsets of the pulse train, spaced l_s + l_m and centred on zero."""
        j = np.arange(self.n_pulses) - (self.n_pulses - 1) / 2.0
        return j * (self.l_s + self.l_m_s)


def success_probability_closed_form(model: SpoofTimingModel) -> tuple[float, float, float]:
    a, lm = model.alpha_sep, model.l_m_s
    du, dsp = model.delta_u_s, model.delta_sp_s
    tu, tsp = model.tau_u_s, model.tau_sp_s
    p1 = ((4 + 3 * a) * du * lm + a * a * lm * lm - a * lm * tu) / (8 * dsp * du)
    p2 = (dsp - tsp + tu) / (2 * dsp)
    ps = min(max(min(p1, p2), 0.0), 1.0)
    return p1, p2, ps


def observation_probability(model: SpoofTimingModel) -> float:
    """P(t_ob <= t_r) for t_ob uniform on [-delta_u, delta_u]."""
    du = model.delta_u_s
    return float(np.clip((du + model.tau_u_s) / (2 * du), 0.0, 1.0))


def merge_window(t_r, t_ob, l_m, l_s):
    """Lower edge of the arrival window [lo, t_r) that captures the leading edge.

    Full width l_s + l_m, except when observation starts inside the
    separation zone ahead of t_r; then the pulse must not precede t_ob
    by more than one peak width.
    """
    t_r = np.asarray(t_r, dtype=float)
    t_ob = np.asarray(t_ob, dtype=float)
    full = t_r - l_s - l_m
    partial = (t_ob >= t_r - l_s) & (t_ob <= t_r)
    return np.where(partial, t_ob - l_m, full)


def _pulse_arrivals(model: SpoofTimingModel, err):
    """(trials, n_pulses) spoof arrival times for spoofer clock errors ``err``."""
    base = model.tau_sp_s - model.lead_s + np.asarray(err, dtype=float)
    return base[..., None] + model.pulse_offsets()


def _in_window(model: SpoofTimingModel, err, t_ob):
    """Boolean (trials, n_pulses) mask of pulses inside the merge window."""
    arr = _pulse_arrivals(model, err)
    lo = merge_window(model.tau_u_s, t_ob, model.l_m_s, model.l_s)
    return (arr >= np.asarray(lo)[..., None]) & (arr < model.tau_u_s)


def success_probability_monte_carlo(model: SpoofTimingModel, trials: int,
                                    rng: np.random.Generator) -> float:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    err = rng.uniform(-model.delta_sp_s, model.delta_sp_s, trials)
    t_ob = rng.uniform(-model.delta_u_s, model.delta_u_s, trials)
    hit = _in_window(model, err, t_ob)
    return float(hit.any(axis=1).mean())


@dataclass
class SensitivityReport:
    derivatives: dict
    regime: dict

    @property
    def signs(self) -> dict:
        return {k: int(np.sign(v)) for k, v in self.derivatives.items()}

    def rows(self):
        for k, v in self.derivatives.items():
            yield {"derivative": k, "value": v, "sign": int(np.sign(v))}


def sensitivity_signs(model: SpoofTimingModel) -> SensitivityReport:
    """Analytic partial derivatives of P1 and P2 and the conditions that fix their sign."""
    a, lm = model.alpha_sep, model.l_m_s
    du, dsp = model.delta_u_s, model.delta_sp_s
    tu, tsp = model.tau_u_s, model.tau_sp_s
    p1, p2, _ = success_probability_closed_form(model)
    d = {
        "dP1_dlm": ((4 + 3 * a) * du + 2 * a * a * lm - a * tu) / (8 * dsp * du),
        "dP2_dlm": 0.0,
        "dP1_dtau_u": -a * lm / (8 * dsp * du),
        "dP2_dtau_u": 1.0 / (2 * dsp),
        "dP1_ddelta_u": a * lm * (tu - a * lm) / (8 * dsp * du * du),
        "dP1_ddelta_sp": -p1 / dsp,
        "dP2_ddelta_sp": (tsp - tu) / (2 * dsp * dsp),
    }
    regime = {
        "typical": tsp < tu and du > model.l_s + lm,
        "p1_active": p1 <= p2,
        "tau_u_le_alpha_lm": tu <= a * lm,
        "tau_sp_lt_tau_u": tsp < tu,
    }
    return SensitivityReport(d, regime)


@dataclass
class SpoofPlan:
    strategy: str
    target_links: tuple
    per_link_power_dbm: dict
    total_budget_dbm: float
    effective_links: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "focused" and len(self.target_links) != 1:
            raise ValueError("focused plan must target exactly one link")


def dbm_to_mw(p):
    return 10.0 ** (np.asarray(p, dtype=float) / 10.0)


def mw_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p, dtype=float))


def detection_floor_dbm(link_profiles, threshold_rel_db: float, noise_floor_dbm: float,
                        spoof_path_loss_db=0.0, n_pulses: int = 1) -> np.ndarray:
    """Transmit power each link needs so every pulse clears the UE detection threshold."""
    snr = np.array([lp.snr_db for lp in link_profiles], dtype=float)
    rx = snr + noise_floor_dbm
    return rx + threshold_rel_db + np.asarray(spoof_path_loss_db, dtype=float) + 10.0 * np.log10(n_pulses)


def water_fill(floors_dbm, budget_dbm: float, step_db: float = 0.5) -> np.ndarray:
    """Lift every target to its floor, then raise a common level over the floors.

    The level climbs in ``step_db`` increments while affordable; the last
    partial step is spread in proportion to the floors so that the linear
    powers sum to the budget exactly.
    """
    floors = dbm_to_mw(floors_dbm)
    budget = float(dbm_to_mw(budget_dbm))
    total = floors.sum()
    level = 0.0
    if total <= budget:
        while total * 10.0 ** ((level + step_db) / 10.0) <= budget:
            level += step_db
    else:
        # water level below the floor: power is still spread, nothing clears
        while total * 10.0 ** (level / 10.0) > budget:
            level -= step_db
    p = floors * 10.0 ** (level / 10.0)
    return p * budget / p.sum()


def plan_attack(strategy: str, link_profiles, budget_dbm: float, threshold_rel_db: float,
                selective_count: int = 3, *, noise_floor_dbm: float = -91.0,
                spoof_path_loss_db=0.0, n_pulses: int = 1) -> SpoofPlan:
    """Allocate the spoofing budget across links.

    ``link_profiles`` are the spoofer's own estimates of the victim links.
    ``spoof_path_loss_db`` (scalar or per link) attenuates spoof power on
    its way to the UE.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    n = len(link_profiles)
    if n == 0:
        raise ValueError("need at least one link")
    snr = np.array([lp.snr_db for lp in link_profiles], dtype=float)
    floors = detection_floor_dbm(link_profiles, threshold_rel_db, noise_floor_dbm,
                                 np.broadcast_to(spoof_path_loss_db, (n,)), n_pulses)
    if strategy == "focused":
        targets = np.array([int(np.argmax(snr))])
        power = np.array([float(dbm_to_mw(budget_dbm))])
    else:
        if strategy == "global":
            targets = np.arange(n)
        else:
            if not 1 <= selective_count <= n:
                raise ValueError("selective_count must lie in [1, link count]")
            targets = np.sort(np.argsort(snr, kind="stable")[:selective_count])
        power = water_fill(floors[targets], budget_dbm)
    p_dbm = mw_to_dbm(power)
    # tiny tolerance for the proportional rescale
    effective = tuple(int(t) for t, p in zip(targets, p_dbm) if p >= floors[t] - 1e-9)
    return SpoofPlan(
        strategy=strategy,
        target_links=tuple(int(t) for t in targets),
        per_link_power_dbm={int(t): float(p) for t, p in zip(targets, p_dbm)},
        total_budget_dbm=float(budget_dbm),
        effective_links=effective,
    )


def apply_spoofing(obs: TdoaObservationMatrix, plan: SpoofPlan, models, rng: np.random.Generator,
                   *, authentic_power_dbm, spoof_path_loss_db=0.0, threshold_rel_db: float = -10.0,
                   tau_u_s=None, tau_sp_s=None, spoof_sigma_s=None) -> TdoaObservationMatrix:
    """Inject merged-peak spoof pulses into the targeted columns.

    One spoofer clock error is drawn per call (shared by all links); the UE
    observation instant is drawn per round and link. Only pulses landing in
    the merge window are kept; earlier ones form a separate abnormal peak
    that the UE rejects. A surviving pulse that clears the detection
    threshold defines the leading edge, shifting the reported time by its
    lead over the authentic arrival.

    ``tau_u_s`` and ``tau_sp_s`` (K x N) override the per-link model delays
    round by round, for a moving UAV.

    ``spoof_sigma_s`` (per link, seconds) replaces the authentic timing
    noise of a spoofed entry with the spoof pulse's own leading-edge
    noise; when None the authentic noise is kept.
    """
    k_rounds, n_links = obs.observed_s.shape
    observed = obs.observed_s.copy()
    mask = obs.spoof_mask.copy()
    if not plan.target_links:
        return obs.with_observed(observed, mask)
    if any(t < 0 or t >= n_links for t in plan.target_links):
        raise ValueError("plan targets a link outside the observation matrix")
    auth = np.broadcast_to(np.asarray(authentic_power_dbm, dtype=float), (n_links,))
    loss = np.broadcast_to(np.asarray(spoof_path_loss_db, dtype=float), (n_links,))
    ref = models[plan.target_links[0]]
    err = rng.uniform(-ref.delta_sp_s, ref.delta_sp_s)
    for t in plan.target_links:
        m = models[t]
        t_ob = rng.uniform(-m.delta_u_s, m.delta_u_s, k_rounds)
        tu = np.full(k_rounds, m.tau_u_s) if tau_u_s is None else np.asarray(tau_u_s, dtype=float)[:, t]
        tsp = np.full(k_rounds, m.tau_sp_s) if tau_sp_s is None else np.asarray(tau_sp_s, dtype=float)[:, t]
        pulse_dbm = plan.per_link_power_dbm[t] - 10.0 * np.log10(m.n_pulses) - loss[t]
        # spoof peak must clear the threshold set by the strongest peak
        if pulse_dbm < max(pulse_dbm, auth[t]) + threshold_rel_db:
            continue
        arr = (tsp - m.lead_s + err)[:, None] + m.pulse_offsets()[None, :]
        lo = merge_window(tu, t_ob, m.l_m_s, m.l_s)
        hit = (arr >= lo[:, None]) & (arr < tu[:, None])
        first = np.where(hit, arr, np.inf).min(axis=1)
        ok = np.isfinite(first)
        if spoof_sigma_s is None:
            edge = obs.received_s[:, t] + (first - tu)
        else:
            sig = float(np.broadcast_to(np.asarray(spoof_sigma_s, dtype=float), (n_links,))[t])
            noise = rng.normal(0.0, 1.0, k_rounds) * sig
            edge = obs.received_s[:, t] - obs.delays_s[:, t] + (first - tu) + noise
        observed[ok, t] = edge[ok]
        mask[ok, t] = True
    return obs.with_observed(observed, mask)


def penetration_grid(rng: np.random.Generator, trials: int, *, ranks: int = 8,
                     cell_radius_m: float = 100.0, spoofer_range_m=(10.0, 100.0),
                     delta_u_s=(1e-6,), delta_sp_s=(1e-6,), lead_s=(0.0,), l_s_s=(1e-7,),
                     l_m_s: float = 5e-8, n_pulses: int = 1, d_gc_max: float = 60.0) -> list[dict]:
    """P_s per gNB distance rank over a grid of timing parameters.

    Each trial draws a UAV position near the centre of a hex deployment and
    a spoofer range; gNBs are ranked by distance to the UAV.
    """
    from .geometry import generate_hex, uniform_disc

    dep = generate_hex(cell_radius_m, 3, np.random.default_rng(0), (0.0, 0.0))
    uav = np.column_stack([uniform_disc(rng, d_gc_max, trials), np.full(trials, 25.0)])
    dist = np.sort(np.linalg.norm(uav[:, None, :] - dep.nodes[None, :, :], axis=2), axis=1)[:, :ranks]
    tau_u = dist / SPEED_OF_LIGHT
    tau_sp = rng.uniform(*spoofer_range_m, trials) / SPEED_OF_LIGHT
    err_unit = rng.uniform(-1.0, 1.0, trials)
    ob_unit = rng.uniform(-1.0, 1.0, trials)
    rows = []
    for du in delta_u_s:
        for dsp in delta_sp_s:
            for lead in lead_s:
                for ls in l_s_s:
                    offsets = (np.arange(n_pulses) - (n_pulses - 1) / 2.0) * (ls + l_m_s)
                    arr = (tau_sp - lead + err_unit * dsp)[:, None] + offsets
                    t_ob = ob_unit * du
                    for r in range(ranks):
                        tr = tau_u[:, r]
                        lo = merge_window(tr, t_ob, l_m_s, ls)
                        hit = ((arr >= lo[:, None]) & (arr < tr[:, None])).any(axis=1)
                        rows.append({"gnb_rank": r + 1, "delta_u_s": du, "delta_sp_s": dsp,
                                     "lead_s": lead, "l_s_s": ls, "p_s": float(hit.mean())})
    return rows


def rows_to_csv(rows, path) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
