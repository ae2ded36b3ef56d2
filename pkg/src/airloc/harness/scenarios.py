"""Per-seed pipelines for each experiment family.

Every function takes ``(config, seed)`` and returns a list of flat record
dicts. All randomness flows from ``np.random.default_rng(seed)`` through
named child streams so that adding a sweep value does not perturb the
draws of the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..adversary import SpoofTimingModel, apply_spoofing, penetration_grid, plan_attack
from ..channel import (H_MAX, H_MIN, SPEED_OF_LIGHT, LinkProfile, fspl_1m_db, link_snr, mean_eta, range_sigma,
                       sample_links)
from ..defense import (filter_rdef, filter_sdet, filter_tcv, localize_spoofer, no_filter,
                       session_radial_velocity, SpooferLocProblem)
from ..geometry import generate_hex, uniform_disc
from ..localization import gd_localize, snr_weights, weighted_gd_localize
from ..measurement import calibrate, estimate_offsets, synthesize
from ..selection import EtaTable, objective_curve, phi_values, rank_lmf, rank_ue, rof_select, rssi_range
from .config import CampaignConfig

_ETA_TABLE: list = []
MIN_LINKS = 3


def eta_table() -> EtaTable:
    """Nominal exponent table, built once per process (LOS offsets are unknown to the selector)."""
    if not _ETA_TABLE:
        _ETA_TABLE.append(EtaTable())
    return _ETA_TABLE[0]


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class Session:
    """One localization session: geometry, channel draws and the clean observation."""

    deployment: object
    uav: np.ndarray
    velocity: np.ndarray
    gnss: np.ndarray
    sigma_gps: float
    h_est: float
    links: dict
    snr_meas: np.ndarray
    obs: object
    offsets_est: np.ndarray
    node_idx: np.ndarray

    def ranges(self, observed=None) -> np.ndarray:
        obs = self.obs if observed is None else self.obs.with_observed(observed, self.obs.spoof_mask)
        return calibrate(obs, self.offsets_est)

    @property
    def sigma_model(self) -> np.ndarray:
        return self.links["sigma_m"]


def _build_session(cfg: CampaignConfig, rng: np.random.Generator, deployment=None, los_offset=0.0,
                   uav=None) -> Session:
    dc, mc = cfg.deployment, cfg.measurement
    if deployment is None:
        deployment = generate_hex(dc.cell_radius_m, dc.layers, rng, dc.node_altitude_m)
    if uav is None:
        xy = uniform_disc(rng, dc.d_gc_max_m)
        uav = np.array([xy[0], xy[1], dc.h_uav_m])
    lo, hi = mc.uav_speed_mps
    speed = rng.uniform(lo, hi) if hi > 0 else 0.0
    heading = rng.uniform(0.0, 2.0 * np.pi)
    velocity = np.array([speed * np.cos(heading), speed * np.sin(heading), 0.0])
    sigma_gps = rng.uniform(*dc.sigma_gps_range_m) if dc.sigma_gps_range_m else dc.sigma_gps_m
    gnss = uav + rng.normal(0.0, sigma_gps, 3)
    h_est = float(np.clip(dc.h_uav_m + rng.normal(0.0, dc.sigma_h_m), H_MIN, H_MAX))

    nodes = deployment.nodes
    d2d = np.hypot(*(nodes[:, :2] - uav[:2]).T)
    links = sample_links(d2d, dc.h_uav_m, rng, cfg.channel, dz=uav[2] - nodes[:, 2], los_offset=los_offset)
    links["sigma_m"] = links["sigma_m"] * mc.sigma_scale
    snr_meas = links["snr_db"] + rng.normal(0.0, cfg.selection.rssi_noise_db, len(d2d))
    idx = np.arange(len(nodes))
    obs = synthesize(uav, deployment, idx, cfg.channel, mc.k_rounds, mc.interval_s, rng,
                     links=links, velocity=velocity, nlos_excess=mc.nlos_excess)
    offsets_est = estimate_offsets(obs, rng, mc.residual_sync_s)
    return Session(deployment, uav, velocity, gnss, sigma_gps, h_est, links, snr_meas, obs, offsets_est, idx)


def _ranking(session: Session, mode: str):
    if mode == "lmf":
        return rank_lmf(session.gnss, session.deployment)
    return rank_ue(session.snr_meas)


def _solve(cfg, nodes, d_hat, p_init, weights=None):
    d_hat = np.maximum(d_hat, 1e-3)
    if weights is None:
        return gd_localize(nodes, d_hat, p_init, cfg.gd).position
    return weighted_gd_localize(nodes, d_hat, weights, p_init, cfg.gd).position


def _rof_n(cfg, session, ranked) -> int:
    table = eta_table()
    d_r = rssi_range(session.snr_meas, session.h_est, table, cfg.channel)
    return rof_select(ranked, session.h_est, table, cfg.selection.n_max, d_r).n_opt


def _empirical_n(cfg, session) -> int:
    """argmin of F from the true node geometry and the nominal exponent table."""
    d2d = np.sort(np.hypot(*(session.deployment.nodes[:, :2] - session.uav[:2]).T))[: cfg.selection.n_max]
    h = cfg.deployment.h_uav_m
    f = objective_curve(phi_values(d2d, h, eta_table()(d2d, h)))
    return int(np.argmin(f[2:]) + 3)


def _true_mean_position(session) -> np.ndarray:
    return session.obs.positions.mean(axis=0)


def selection_records(cfg: CampaignConfig, seed: int) -> list[dict]:
    """Node-selection family: error versus N per ranking mode, plus ROF (and empirical N)."""
    records = []
    dep_rng, *offset_rngs = _streams(seed, 1 + len(cfg.los_offsets))
    dc = cfg.deployment
    deployment = generate_hex(dc.cell_radius_m, dc.layers, dep_rng, dc.node_altitude_m)
    xy = uniform_disc(dep_rng, dc.d_gc_max_m)
    uav = np.array([xy[0], xy[1], dc.h_uav_m])
    for los_offset, rng in zip(cfg.los_offsets, offset_rngs):
        s = _build_session(cfg, rng, deployment, los_offset, uav)
        d_hat = s.ranges().mean(axis=0)
        truth = _true_mean_position(s)
        for mode in cfg.selection.modes:
            order = _ranking(s, mode).order
            policies = [(n, "fixed") for n in cfg.selection.n_values]
            if cfg.selection.rof:
                policies.append((_rof_n(cfg, s, _ranking(s, mode)), "rof"))
            if cfg.scenario == "los_variation":
                policies.append((_empirical_n(cfg, s), "empirical"))
            for n, policy in policies:
                sel = order[:n]
                for weighted in cfg.selection.weighted:
                    w = snr_weights(s.snr_meas[sel]) if weighted else None
                    est = _solve(cfg, s.deployment.nodes[sel], d_hat[sel], s.gnss, w)
                    records.append({
                        "seed": seed, "los_offset": los_offset, "mode": mode, "policy": policy,
                        # adaptive policies group under n = 0; the count they chose is n_selected
                        "n": int(n) if policy == "fixed" else 0, "weighted": bool(weighted),
                        "n_selected": int(n), "victim_error_m": float(np.linalg.norm(est - truth)),
                    })
    return records


def penetration_records(cfg: CampaignConfig, seed: int) -> list[dict]:
    pc = cfg.penetration
    rng = np.random.default_rng(seed)
    records = []
    for n_p in pc.n_pulses:
        rows = penetration_grid(rng, pc.trials_per_seed, ranks=pc.ranks,
                                cell_radius_m=cfg.deployment.cell_radius_m,
                                delta_u_s=pc.delta_u_s, delta_sp_s=pc.delta_sp_s, lead_s=pc.lead_s,
                                l_s_s=pc.l_s_s, l_m_s=pc.l_m_s, n_pulses=n_p,
                                d_gc_max=cfg.deployment.d_gc_max_m)
        for r in rows:
            records.append({"seed": seed, "n_pulses": n_p, **r})
    return records


# ---- attack / defense ---------------------------------------------------


def spoof_path_loss_db(cfg, spoofer, positions) -> np.ndarray:
    """Free-space loss from the spoofer to the UAV per round (both airborne)."""
    d = np.maximum(np.linalg.norm(positions - spoofer, axis=-1), 1.0)
    return fspl_1m_db(cfg.channel.carrier_freq_hz) + 20.0 * np.log10(d)


def _spoofer_link_estimates(cfg, spoofer, nodes) -> list[LinkProfile]:
    """Spoofer's view of the victim links: its own gNB distances and the mean exponent."""
    d2d = np.hypot(*(nodes[:, :2] - spoofer[:2]).T)
    d3d = np.maximum(np.linalg.norm(nodes - spoofer, axis=1), 1.0)
    h = float(np.clip(spoofer[2], H_MIN, H_MAX))
    eta = mean_eta(d2d, h)
    snr = link_snr(d3d, eta, cfg.channel)
    return [LinkProfile(float(a), float(b), h, True, float(e), float(s), np.nan)
            for a, b, e, s in zip(d2d, d3d, eta, snr)]


def _attack_variants(cfg):
    ac = cfg.attack
    out = []
    for strategy in ac.strategies:
        counts = ac.selective_counts if strategy == "selective" else (0,)
        for c in counts:
            for budget in ac.budgets_dbm:
                out.append((strategy, int(c), float(budget)))
    return out


def _filter_variants(cfg):
    out = []
    for f in cfg.defense.filters:
        if f == "rdef":
            out.extend(("rdef", b) for b in cfg.defense.rdef_betas)
        else:
            out.append((f, 1.0))
    return out


def _run_filter(cfg, s, sel, d_hat, name, beta):
    nodes = s.deployment.nodes[sel]
    sig = s.sigma_model[sel]
    if name == "none":
        return no_filter(d_hat)
    if name == "tcv":
        return filter_tcv(d_hat, nodes, sig)
    if name == "sdet":
        return filter_sdet(d_hat, s.gnss, nodes, sig, s.sigma_gps)
    batches = [d_hat[k:k + 1] for k in range(d_hat.shape[0])]
    return filter_rdef(batches, s.gnss, nodes, s.velocity, cfg.defense.rdef_gd, beta,
                       sigma_snr=sig, sigma_gnss=s.sigma_gps, interval_s=cfg.measurement.interval_s)


def _victim_estimate(cfg, s, sel, verdict):
    keep = np.ones(len(sel), dtype=bool)
    keep[list(verdict.dropped_columns)] = False
    p0 = s.gnss
    if verdict.position_track is not None:
        p0 = verdict.position_track.mean(axis=0)
    if keep.sum() < MIN_LINKS:
        # too few ranges to multilaterate: report the prior
        return p0.copy()
    d_mean = verdict.filled_ranges[:, keep].mean(axis=0)
    w = snr_weights(s.snr_meas[sel][keep])
    return _solve(cfg, s.deployment.nodes[sel][keep], d_mean, p0, w)


def _attacked_session(cfg, rng, deployment, spoofer):
    """Benign session with ROF/UE selection; returns it and the selected column indices."""
    s = _build_session(cfg, rng, deployment)
    ranked = _ranking(s, cfg.selection.modes[0])
    n = _rof_n(cfg, s, ranked)
    sel = ranked.order[:n]
    return s, sel


def _spoof(cfg, s, sel, spoofer, strategy, count, budget, rng):
    ac = cfg.attack
    obs = s.obs
    nodes = s.deployment.nodes[sel]
    l_m = ac.l_m_s if ac.l_m_s is not None else 1.0 / cfg.channel.bandwidth_hz
    tau_u = obs.true_toa_s[:, sel]
    tau_sp = np.linalg.norm(obs.positions - spoofer, axis=1) / SPEED_OF_LIGHT
    loss = spoof_path_loss_db(cfg, spoofer, obs.positions).mean()
    est = _spoofer_link_estimates(cfg, spoofer, nodes)
    # a selective attack on more links than were selected hits all of them
    plan = plan_attack(strategy, est, budget, ac.threshold_rel_db, min(count or 1, len(sel)),
                       noise_floor_dbm=cfg.channel.noise_floor_dbm, spoof_path_loss_db=loss,
                       n_pulses=ac.n_pulses)
    models = [SpoofTimingModel(ac.delta_u_s, ac.delta_sp_s, float(tau_u[0, j]), float(tau_sp[0]),
                               l_m, ac.alpha_sep, ac.lead_s, ac.n_pulses) for j in range(len(sel))]
    sub = obs.__class__(
        true_toa_s=obs.true_toa_s[:, sel], clock_offsets_s=obs.clock_offsets_s[sel],
        delays_s=obs.delays_s[:, sel], received_s=obs.received_s[:, sel],
        observed_s=obs.observed_s[:, sel], spoof_mask=obs.spoof_mask[:, sel],
        interval_s=obs.interval_s, node_index=obs.node_index[sel], positions=obs.positions)
    auth = s.links["snr_db"][sel] + cfg.channel.noise_floor_dbm
    # the spoof pulse's leading edge carries its own SNR-dependent jitter
    tx = np.array([plan.per_link_power_dbm.get(j, cfg.channel.noise_floor_dbm) for j in range(len(sel))])
    pulse_dbm = tx - 10.0 * np.log10(ac.n_pulses) - loss
    spoof_sigma = (range_sigma(pulse_dbm - cfg.channel.noise_floor_dbm, cfg.channel.bandwidth_hz)
                   * cfg.measurement.sigma_scale / SPEED_OF_LIGHT)
    attacked = apply_spoofing(sub, plan, models, rng, authentic_power_dbm=auth, spoof_path_loss_db=loss,
                              threshold_rel_db=ac.threshold_rel_db, tau_u_s=tau_u,
                              tau_sp_s=np.repeat(tau_sp[:, None], len(sel), axis=1),
                              spoof_sigma_s=spoof_sigma)
    d_hat = calibrate(attacked, s.offsets_est[sel])
    return attacked, d_hat


def _place_spoofer(cfg, rng):
    xy = uniform_disc(rng, cfg.deployment.d_gc_max_m)
    return np.array([xy[0], xy[1], cfg.deployment.h_uav_m])


def attack_records(cfg: CampaignConfig, seed: int) -> list[dict]:
    """Victim error per attack strategy, budget and filter for one session."""
    dep_rng, sess_rng, atk_seed = np.random.SeedSequence(seed).spawn(3)
    dep_rng, sess_rng = np.random.default_rng(dep_rng), np.random.default_rng(sess_rng)
    dc = cfg.deployment
    deployment = generate_hex(dc.cell_radius_m, dc.layers, dep_rng, dc.node_altitude_m)
    spoofer = _place_spoofer(cfg, dep_rng)
    s, sel = _attacked_session(cfg, sess_rng, deployment, spoofer)
    truth = _true_mean_position(s)
    records = []
    for strategy, count, budget in _attack_variants(cfg):
        # same spoofer clock draw for every strategy and budget
        rng = np.random.default_rng(atk_seed)
        attacked, d_hat = _spoof(cfg, s, sel, spoofer, strategy, count, budget, rng)
        mask = attacked.spoof_mask
        for name, beta in _filter_variants(cfg):
            v = _run_filter(cfg, s, sel, d_hat, name, beta)
            est = _victim_estimate(cfg, s, sel, v)
            flagged = v.flagged_mask
            records.append({
                "seed": seed, "strategy": strategy, "selective_count": count, "budget_dbm": budget,
                "filter": name, "beta_t": beta, "n_selected": int(len(sel)),
                "spoofed_count": int(mask.sum()), "flagged_count": int(flagged.sum()),
                "false_positive_count": int((flagged & ~mask).sum()),
                "victim_error_m": float(np.linalg.norm(est - truth)),
            })
    return records


def spoofer_loc_records(cfg: CampaignConfig, seed: int) -> list[dict]:
    """Spoofer localization against one stationary spoofer.

    Victim sessions are simulated until every attack/filter variant holds
    M radial-speed entries (one per session) or the session cap is hit.
    Each entry pairs the LMF's filtered position estimate and the reported
    velocity with the session's measured radial speed.
    """
    sc = cfg.spoofer_loc
    root = np.random.SeedSequence(seed)
    dep_ss, *sess_ss = root.spawn(1 + sc.max_sessions)
    dep_rng = np.random.default_rng(dep_ss)
    dc = cfg.deployment
    deployment = generate_hex(dc.cell_radius_m, dc.layers, dep_rng, dc.node_altitude_m)
    spoofer = _place_spoofer(cfg, dep_rng)
    keys = [(a, f) for a in _attack_variants(cfg) for f in _filter_variants(cfg)]
    acc = {k: {"pos": [], "vel": [], "vr": [], "flagged": 0, "fp": 0, "sessions": 0} for k in keys}
    for ss in sess_ss:
        open_keys = [k for k in keys if len(acc[k]["vr"]) < sc.sessions]
        if not open_keys:
            break
        s_rng_ss, atk_ss = ss.spawn(2)
        s, sel = _attacked_session(cfg, np.random.default_rng(s_rng_ss), deployment, spoofer)
        spoofed = {}
        for a, f in open_keys:
            if a not in spoofed:
                spoofed[a] = _spoof(cfg, s, sel, spoofer, *a, np.random.default_rng(atk_ss))
            attacked, d_hat = spoofed[a]
            v = _run_filter(cfg, s, sel, d_hat, *f)
            flagged = v.flagged_mask
            slot = acc[(a, f)]
            slot["sessions"] += 1
            slot["flagged"] += int(flagged.sum())
            slot["fp"] += int((flagged & ~attacked.spoof_mask).sum())
            vr = session_radial_velocity(attacked.observed_s, flagged, cfg.measurement.interval_s,
                                         sc.max_radial_speed_mps)
            if vr is None:
                continue
            slot["pos"].append(_victim_estimate(cfg, s, sel, v))
            slot["vel"].append(s.velocity)
            slot["vr"].append(vr)
    records = []
    for (strategy, count, budget), (name, beta) in keys:
        slot = acc[((strategy, count, budget), (name, beta))]
        m = len(slot["vr"])
        err = np.nan
        if m > sc.min_entries:
            prob = SpooferLocProblem(np.array(slot["pos"]), np.array(slot["vel"]), np.array(slot["vr"]))
            gd = cfg.defense.rdef_gd if sc.solver == "gd" else None
            err = float(np.linalg.norm(localize_spoofer(prob, gd).position - spoofer))
        records.append({
            "seed": seed, "strategy": strategy, "selective_count": count, "budget_dbm": budget,
            "filter": name, "beta_t": beta, "sessions": slot["sessions"], "entries": m,
            "flagged_count": slot["flagged"], "false_positive_count": slot["fp"],
            "spoofer_error_m": err,
        })
    return records


PIPELINES = {
    "node_selection": selection_records,
    "weighted": selection_records,
    "los_variation": selection_records,
    "penetration": penetration_records,
    "attack_defense": attack_records,
    "spoofer_loc": spoofer_loc_records,
}
