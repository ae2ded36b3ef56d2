"""Hexagonal gNB deployments, agent placement and the N-th nearest distance model.

Positions are plain ``(3,)`` float arrays (x, y, z in meters); collections
of positions are ``(n, 3)`` arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

Position3 = np.ndarray

# axial unit steps walking around a hex ring, starting from the +x corner
_HEX_DIRS = np.array([[-1, 1], [-1, 0], [0, -1], [1, -1], [1, 0], [0, 1]])


def hex_node_count(layers: int) -> int:
    return 3 * layers * layers + 3 * layers + 1


def layers_for(min_nodes: int) -> int:
    """Smallest layer count whose lattice holds at least ``min_nodes`` nodes."""
    k = 1
    while hex_node_count(k) < min_nodes:
        k += 1
    return k


@dataclass(frozen=True)
class Deployment:
    cell_radius_m: float
    nodes: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    layers: int = 0

    def __len__(self):
        return len(self.nodes)

    def to_json(self) -> str:
        return json.dumps({
            "cell_radius_m": self.cell_radius_m,
            "layers": self.layers,
            "origin": list(map(float, self.origin)),
            "nodes": [list(map(float, p)) for p in self.nodes],
        })

    @classmethod
    def from_json(cls, text: str) -> "Deployment":
        doc = json.loads(text)
        return cls(
            cell_radius_m=float(doc["cell_radius_m"]),
            nodes=np.asarray(doc["nodes"], dtype=float).reshape(-1, 3),
            origin=np.asarray(doc.get("origin", [0, 0, 0]), dtype=float),
            layers=int(doc.get("layers", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Deployment":
        return cls.from_json(Path(path).read_text())


def hex_lattice_xy(cell_radius_m: float, layers: int) -> np.ndarray:
    """Center plus ``layers`` rings of a hex lattice with neighbor spacing R."""
    pts = [(0, 0)]
    for j in range(1, layers + 1):
        q, r = j, 0
        for d in _HEX_DIRS:
            for _ in range(j):
                pts.append((q, r))
                q, r = q + d[0], r + d[1]
    qr = np.asarray(pts, dtype=float)
    x = cell_radius_m * (qr[:, 0] + 0.5 * qr[:, 1])
    y = cell_radius_m * (np.sqrt(3.0) / 2.0) * qr[:, 1]
    return np.column_stack([x, y])


def generate_hex(cell_radius_m: float, layers: int, altitude_rng: np.random.Generator,
                 altitude_range=(0.0, 5.0)) -> Deployment:
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if cell_radius_m <= 0:
        raise ValueError("cell_radius_m must be positive")
    xy = hex_lattice_xy(cell_radius_m, layers)
    z = altitude_rng.uniform(altitude_range[0], altitude_range[1], size=len(xy))
    return Deployment(cell_radius_m, np.column_stack([xy, z]), layers=layers)


def nth_nearest_d2d(delta: float, cell_radius_m: float, n: int) -> float:
    """Analytic horizontal distance to the n-th nearest node.

    Inside layer k the distance sweeps linearly across [kR - delta, kR + delta]
    with slope delta/(3k) per added node.
    """
    if not 0.0 <= delta <= cell_radius_m / 2.0:
        raise ValueError("delta must lie in [0, R/2]")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return float(delta)
    k = 1
    while n > hex_node_count(k):
        k += 1
    i = n - hex_node_count(k - 1)
    return float(k * cell_radius_m - delta + 2.0 * delta * i / (6 * k))


def uniform_disc(rng: np.random.Generator, radius: float, size=None) -> np.ndarray:
    """Uniform points in a disc (sqrt-radius sampling); returns (..., 2)."""
    r = radius * np.sqrt(rng.random(size))
    th = rng.uniform(0.0, 2.0 * np.pi, size)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def place_agents(deployment: Deployment, d_gc_max: float, h_uav: float,
                 rng: np.random.Generator) -> tuple[Position3, Position3]:
    """Independent uniform-in-disc placement of the victim UAV and the spoofer."""
    if d_gc_max < 0:
        raise ValueError("d_gc_max must be non-negative")
    xy = uniform_disc(rng, d_gc_max, 2) + deployment.origin[:2]
    uav = np.array([xy[0, 0], xy[0, 1], h_uav])
    spoofer = np.array([xy[1, 0], xy[1, 1], h_uav])
    return uav, spoofer
