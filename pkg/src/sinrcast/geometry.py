"""Metric spaces, station layouts and the communication graph.

Distances are in model units where the communication range is 1.  Two spaces
ship: the Euclidean plane (growth dimension 2) and the real line (dimension 1).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidInputError,
    TopologyDisconnectedError,
    TopologyParseError,
)

FAMILIES = ("uniform-square", "grid", "line-uniform", "line-geometric")

UNIFORM_RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class MetricSpace:
    name: str
    dim: int
    gamma: float

    def dist(self, p: Sequence[float], q: Sequence[float]) -> float:
        if len(p) != self.dim or len(q) != self.dim:
            raise InvalidInputError(
                f"{self.name} points have {self.dim} coordinate(s), got {len(p)} and {len(q)}"
            )
        if self.dim == 1:
            return abs(float(p[0]) - float(q[0]))
        return math.hypot(*(float(a) - float(b) for a, b in zip(p, q)))

    def pairwise(self, positions: np.ndarray) -> np.ndarray:
        diff = positions[:, None, :] - positions[None, :, :]
        if self.dim == 1:
            return np.abs(diff[..., 0])
        return np.sqrt(np.sum(diff * diff, axis=-1))


EUCLIDEAN_PLANE = MetricSpace("euclidean2", 2, 2.0)
LINE = MetricSpace("line", 1, 1.0)
SPACES = {s.name: s for s in (EUCLIDEAN_PLANE, LINE)}


def dist(p: Sequence[float], q: Sequence[float], space: MetricSpace) -> float:
    return space.dist(p, q)


def covering_bound(big_radius: float, small_radius: float, gamma: float) -> int:
    """Upper bound on the number of radius-``small_radius`` balls covering a
    radius-``big_radius`` ball: ``ceil(3R/rho) ** gamma`` rounded up."""
    if not (big_radius > 0 and small_radius > 0 and gamma > 0):
        raise InvalidInputError("covering_bound needs positive radii and dimension")
    ratio = 3.0 * big_radius / small_radius
    # absorb representation error such as 3 * (4/3) = 4.000000000000001
    base = math.ceil(ratio * (1.0 - 1e-12))
    return math.ceil(base**gamma * (1.0 - 1e-12)) if gamma != int(gamma) else base ** int(gamma)


@dataclass
class CommGraph:
    adjacency: list[frozenset[int]]
    diameter: int | None  # None when disconnected
    granularity: float
    components: int


def _components(adjacency: Sequence[Iterable[int]]) -> int:
    n = len(adjacency)
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        stack = [s]
        while stack:
            v = stack.pop()
            for u in adjacency[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
    return count


def bfs_eccentricity(adjacency: Sequence[Iterable[int]], source: int) -> tuple[int, int]:
    """Return (eccentricity, reached count) of ``source``."""
    depth = {source: 0}
    queue = deque([source])
    far = 0
    while queue:
        v = queue.popleft()
        for u in adjacency[v]:
            if u not in depth:
                depth[u] = depth[v] + 1
                far = max(far, depth[u])
                queue.append(u)
    return far, len(depth)


def build_comm_graph(positions: np.ndarray, space: MetricSpace, epsilon: float) -> CommGraph:
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in (0,1), got {epsilon}")
    n = len(positions)
    d = space.pairwise(np.asarray(positions, dtype=float).reshape(n, space.dim))
    edges = d <= 1.0 - epsilon
    np.fill_diagonal(edges, False)
    adjacency = [frozenset(np.flatnonzero(edges[v]).tolist()) for v in range(n)]

    comps = _components(adjacency) if n else 0
    diameter = None
    if comps <= 1:
        diameter = 0
        for v in range(n):
            ecc, _ = bfs_eccentricity(adjacency, v)
            diameter = max(diameter, ecc)

    if edges.any():
        lengths = d[edges]
        shortest = lengths.min()
        granularity = float(lengths.max() / shortest) if shortest > 0 else math.inf
    else:
        granularity = 1.0
    return CommGraph(adjacency, diameter, granularity, comps)


@dataclass
class NetworkTopology:
    positions: np.ndarray  # shape (n, dim), station id = row index
    space: MetricSpace
    epsilon: float
    adjacency: list[frozenset[int]] = field(repr=False)
    diameter: int | None
    granularity: float
    components: int = 1
    family: str = "custom"

    @classmethod
    def from_positions(cls, positions, space: MetricSpace, epsilon: float, family: str = "custom"):
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, space.dim)
        if pos.ndim != 2 or pos.shape[1] != space.dim:
            raise InvalidInputError(f"positions must have shape (n, {space.dim})")
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError("positions must be finite")
        graph = build_comm_graph(pos, space, epsilon)
        pos.setflags(write=False)
        return cls(pos, space, epsilon, graph.adjacency, graph.diameter,
                   graph.granularity, graph.components, family)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def connected(self) -> bool:
        return self.components <= 1

    def distances(self) -> np.ndarray:
        return self.space.pairwise(self.positions)

    def point(self, station: int) -> tuple[float, ...]:
        if not 0 <= station < self.n:
            raise InvalidInputError(f"unknown station id {station}")
        return tuple(float(c) for c in self.positions[station])

    def check_distinct(self) -> None:
        d = self.distances()
        np.fill_diagonal(d, np.inf)
        if self.n > 1 and d.min() <= 0.0:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise DegenerateGeometryError(f"stations {min(i, j)} and {max(i, j)} coincide")


def ball_members(topology: NetworkTopology, center, radius: float) -> set[int]:
    """Closed ball: stations within ``radius`` of a station id or a point."""
    if radius < 0:
        raise InvalidInputError("radius must be nonnegative")
    if isinstance(center, (int, np.integer)):
        origin = np.asarray(topology.point(int(center)))
    else:
        origin = np.asarray(center, dtype=float)
        if origin.shape != (topology.space.dim,):
            raise InvalidInputError("center point has the wrong dimension")
    d = topology.space.pairwise(np.vstack([origin[None, :], topology.positions]))[0, 1:]
    members = set(np.flatnonzero(d <= radius).tolist())
    if isinstance(center, (int, np.integer)):
        members.add(int(center))
    return members


# ---------------------------------------------------------------------------
# generators


def _grid_positions(n: int, spacing: float) -> np.ndarray:
    cols = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    return np.column_stack([(idx % cols) * spacing, (idx // cols) * spacing]).astype(float)


def line_geometric_positions(n: int, scale: float = 1.0) -> np.ndarray:
    """x_1 = 0 and dist(x_i, x_{i+1}) = scale / 2**i."""
    pos = [0.0]
    for i in range(1, n):
        nxt = pos[-1] + scale / 2.0**i
        if nxt == pos[-1]:
            raise DegenerateGeometryError(
                f"line-geometric spacing underflows double precision at station {i} (n={n})"
            )
        pos.append(nxt)
    return np.array(pos).reshape(n, 1)


def generate_topology(family: str, n: int, params: dict | None = None, seed: int = 0) -> NetworkTopology:
    """Build a station layout and its communication graph.

    ``params`` keys: ``epsilon`` (default 0.5) for every family, plus ``side``
    (uniform-square), ``spacing`` (grid, line-uniform) or ``scale``
    (line-geometric, default 1).
    """
    params = dict(params or {})
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown topology family {family!r}; choose from {FAMILIES}")
    eps = float(params.get("epsilon", 0.5))

    if family == "uniform-square":
        side = float(params.get("side", 1.0))
        if side <= 0:
            raise InvalidInputError("side must be positive")
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), n]))
        comps = 0
        for _ in range(UNIFORM_RESAMPLE_LIMIT):
            pos = rng.uniform(0.0, side, size=(n, 2))
            topo = NetworkTopology.from_positions(pos, EUCLIDEAN_PLANE, eps, family)
            comps = topo.components
            if topo.connected and _all_distinct(topo):
                return topo
        raise TopologyDisconnectedError(
            comps, f"uniform-square side={side} n={n}: no connected sample in "
            f"{UNIFORM_RESAMPLE_LIMIT} draws (last had {comps} components)")

    if family == "grid":
        spacing = float(params.get("spacing", 0.9 * (1 - eps)))
        if spacing <= 0:
            raise InvalidInputError("spacing must be positive")
        topo = NetworkTopology.from_positions(_grid_positions(n, spacing), EUCLIDEAN_PLANE, eps, family)
    elif family == "line-uniform":
        spacing = float(params.get("spacing", 0.9 * (1 - eps)))
        if spacing <= 0:
            raise InvalidInputError("spacing must be positive")
        topo = NetworkTopology.from_positions(np.arange(n, dtype=float) * spacing, LINE, eps, family)
    else:
        scale = float(params.get("scale", 1.0))
        topo = NetworkTopology.from_positions(line_geometric_positions(n, scale), LINE, eps, family)

    if not topo.connected:
        raise TopologyDisconnectedError(topo.components)
    return topo


def _all_distinct(topo: NetworkTopology) -> bool:
    try:
        topo.check_distinct()
    except DegenerateGeometryError:
        return False
    return True


def line_for_diameter(n: int, diameter: int, epsilon: float = 0.5) -> NetworkTopology:
    """Equally spaced line of ``n`` stations whose communication graph has the
    requested diameter (granularity 1)."""
    if n < 2 or not 1 <= diameter <= n - 1:
        raise InvalidInputError("need n >= 2 and 1 <= diameter <= n-1")
    hop = math.ceil((n - 1) / diameter)
    # keep hop*spacing strictly inside the edge threshold
    spacing = (1 - epsilon) / hop * (1 - 1e-9)
    topo = generate_topology("line-uniform", n, {"spacing": spacing, "epsilon": epsilon})
    if topo.diameter != diameter:
        raise InvalidInputError(f"no equally spaced line with n={n} has diameter {diameter}")
    return topo


# ---------------------------------------------------------------------------
# topology files


def format_topology(topo: NetworkTopology) -> str:
    lines = [f"#space={topo.space.name} epsilon={topo.epsilon!r}"]
    for i, row in enumerate(topo.positions):
        lines.append(", ".join([str(i)] + [format(float(c), ".17g") for c in row]))
    return "\n".join(lines) + "\n"


def write_topology(topo: NetworkTopology, path) -> None:
    Path(path).write_text(format_topology(topo))


def parse_topology(text: str) -> NetworkTopology:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise TopologyParseError(1, "missing '#space=... epsilon=...' header")
    header = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    space = SPACES.get(header.get("space", ""))
    if space is None:
        raise TopologyParseError(1, f"unknown space {header.get('space')!r}")
    try:
        eps = float(header["epsilon"])
    except (KeyError, ValueError):
        raise TopologyParseError(1, "header lacks a numeric epsilon") from None

    rows: dict[int, list[float]] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != space.dim + 1:
            raise TopologyParseError(lineno, f"expected id and {space.dim} coordinate(s)")
        try:
            sid = int(fields[0])
            coords = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise TopologyParseError(lineno, str(exc)) from None
        if sid in rows:
            raise TopologyParseError(lineno, f"duplicate station id {sid}")
        rows[sid] = coords
    if sorted(rows) != list(range(len(rows))):
        raise TopologyParseError(len(lines), "station ids must be 0..n-1")
    pos = np.array([rows[i] for i in range(len(rows))], dtype=float).reshape(len(rows), space.dim)
    try:
        return NetworkTopology.from_positions(pos, space, eps, family="file")
    except InvalidInputError as exc:
        raise TopologyParseError(1, str(exc)) from None


def read_topology(path) -> NetworkTopology:
    return parse_topology(Path(path).read_text())
