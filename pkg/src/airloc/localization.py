"""Momentum gradient-descent position solver and the CRB proxy."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float = 4.0
    discount: float = 0.5
    momentum: float = 1e-5
    max_iter: int = 50
    convergence_threshold: float = 4e-5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


# inner-loop settings used by the recursive filter and the spoofer solver
RDEF_GD = GdConfig(learning_rate=1.5, max_iter=5)


@dataclass
class GdResult:
    position: np.ndarray
    iterations_used: int
    final_residual: float
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "x", "y", "z", "D", "alpha"])
            for row in self.trace:
                w.writerow(row)


def weighted_gd_localize(node_positions, d_hat, weights, p_init, config: GdConfig = GdConfig(),
                         record_trace: bool = False) -> GdResult:
    """Weighted variant: each node's gradient and residual term scaled by its weight.

    Steps have fixed length alpha/N along the normalised gradient; alpha is
    multiplied by the discount whenever the residual D grows.
    """
    nodes = np.asarray(node_positions, dtype=float).reshape(-1, 3)
    d_hat = np.asarray(d_hat, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = len(nodes)
    if n < 1:
        raise ValueError("need at least one node")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    if np.any(d_hat <= 0):
        raise ValueError("d_hat must be positive")

    # iterate in a frame centred on the start so that the result does not
    # depend on where the coordinate origin sits
    origin = np.asarray(p_init, dtype=float).copy()
    rel = nodes - origin
    q = np.zeros(3)
    alpha = config.learning_rate
    d_prev = None
    trace = []
    residual = np.nan
    for i in range(1, config.max_iter + 1):
        diff = q - rel
        d_tilde = np.linalg.norm(diff, axis=1)
        r = d_hat - d_tilde
        g = (w * r / d_hat) @ diff
        # decay and stopping track the weighted absolute residual; the signed
        # sum can cross zero away from the solution and freeze the step
        d_cur = float(w @ np.abs(r))
        residual = d_cur
        gn = np.linalg.norm(g)
        if gn == 0.0:
            # stationary: either an exact fit or a degenerate geometry
            exact = np.allclose(r, 0.0, atol=1e-9)
            return GdResult(origin + q, i - 1, abs(d_cur), exact, trace)
        q = q + config.momentum * (origin + q) + (alpha / n) * g / gn
        if record_trace:
            p = origin + q
            trace.append([i, p[0], p[1], p[2], d_cur, alpha])
        if d_prev is not None:
            if d_cur > d_prev:
                alpha *= config.discount
            if d_cur == 0.0 or abs((d_cur - d_prev) / d_cur) < config.convergence_threshold:
                return GdResult(origin + q, i, abs(d_cur), True, trace)
        d_prev = d_cur
    return GdResult(origin + q, config.max_iter, abs(residual), False, trace)


def gd_localize(node_positions, d_hat, p_init, config: GdConfig = GdConfig(),
                record_trace: bool = False) -> GdResult:
    """Unweighted solver; equivalent to unit weights."""
    n = len(np.asarray(d_hat).reshape(-1))
    return weighted_gd_localize(node_positions, d_hat, np.ones(n), p_init, config, record_trace)


def snr_weights(snr_db) -> np.ndarray:
    """w = N * SNR / sum(SNR), linear SNR."""
    lin = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    return len(lin) * lin / lin.sum()


def crb_proxy(sigma_d) -> float:
    """(1/N) * (mean sigma_d)^2."""
    s = np.asarray(sigma_d, dtype=float)
    if s.size == 0:
        raise ValueError("sigma_d must be nonempty")
    return float(s.mean() ** 2 / s.size)


def with_momentum(config: GdConfig, momentum: float) -> GdConfig:
    return replace(config, momentum=momentum)
