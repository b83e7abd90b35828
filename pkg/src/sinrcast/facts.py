"""Oracle checks for the probabilistic and geometric facts the protocols rely on.

The two probability facts are checked by exact evaluation:

* exactly one of independent events with probabilities ``p`` happens with
  probability in ``[s/2, s]`` where ``s = sum(p) <= 1/2``;
* none happens with probability at least ``4 ** -sum(p)`` when every
  ``p_i <= 1/2``.

The reception facts are checked by building random instances, testing the
hypothesis numerically and resolving the round through the SINR engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import PreconditionError
from .geometry import EUCLIDEAN_PLANE, NetworkTopology
from .sinr import SinrParams, resolve_round

SLACK = 1e-12


class FactResult(NamedTuple):
    value: float
    passed: bool


def _as_batch(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise PreconditionError("expected a vector or a batch of vectors")
    if a.size and (np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a))):
        raise PreconditionError("probabilities must lie in [0, 1]")
    return a


def exactly_one_probability(p) -> np.ndarray:
    """sum_i p_i prod_{j != i} (1 - p_j) for each row, without division.

    Zero padding leaves the value unchanged, so ragged vectors can share a
    batch.
    """
    a = _as_batch(p)
    if a.shape[1] == 0:
        return np.zeros(a.shape[0])
    q = 1.0 - a
    ones = np.ones((a.shape[0], 1))
    prefix = np.cumprod(np.hstack([ones, q[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, q[:, :0:-1]]), axis=1)[:, ::-1]
    return np.sum(a * prefix * suffix, axis=1)


def fact_sum_batch(p) -> tuple[np.ndarray, np.ndarray]:
    a = _as_batch(p)
    s = a.sum(axis=1)
    if np.any(s > 0.5 + SLACK):
        raise PreconditionError("the probabilities must sum to at most 1/2")
    value = exactly_one_probability(a)
    ok = (value >= s / 2 - SLACK) & (value <= s + SLACK)
    return value, ok


def check_fact_sum(p) -> FactResult:
    """Exact probability that exactly one event happens, and whether it lies
    in [s/2, s]."""
    value, ok = fact_sum_batch(np.asarray(p, dtype=float).reshape(1, -1))
    return FactResult(float(value[0]), bool(ok[0]))


def fact_notransmit_batch(p) -> tuple[np.ndarray, np.ndarray]:
    a = _as_batch(p)
    if np.any(a > 0.5):
        raise PreconditionError("every probability must be at most 1/2")
    value = np.prod(1.0 - a, axis=1)
    bound = 4.0 ** -a.sum(axis=1)
    return value, value >= bound - SLACK


def check_fact_notransmit(p) -> FactResult:
    """Exact probability that nothing happens, and whether it is at least
    4^(-sum p)."""
    value, ok = fact_notransmit_batch(np.asarray(p, dtype=float).reshape(1, -1))
    return FactResult(float(value[0]), bool(ok[0]))


def random_probability_vectors(rng: np.random.Generator, count: int, max_len: int = 12,
                               total: float = 0.5, cap: float | None = None) -> np.ndarray:
    """Zero-padded random vectors with sum at most ``total`` (and entries at
    most ``cap``).  Some rows hit the bounds exactly."""
    lengths = rng.integers(0, max_len + 1, size=count)
    raw = rng.random((count, max_len)) ** rng.uniform(0.2, 3.0, size=(count, 1))
    raw[np.arange(max_len)[None, :] >= lengths[:, None]] = 0.0
    sums = raw.sum(axis=1, keepdims=True)
    target = total * rng.random((count, 1)) ** 0.5
    target[rng.random(count) < 0.1] = total     # tight rows
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sums > 0, raw / sums * target, 0.0)
    if cap is not None:
        out = np.minimum(out, cap)
    return out


# ---------------------------------------------------------------------------
# reception facts


def sinr_at_point(point, v: int, transmitters, topology: NetworkTopology, params: SinrParams) -> float:
    """SINR of ``v`` at an arbitrary point of the plane."""
    pos = topology.positions
    d = np.sqrt(((pos - np.asarray(point, dtype=float)) ** 2).sum(axis=1))
    T = sorted(set(transmitters))
    if d[v] == 0.0:
        return math.inf
    if np.any(d[T] == 0.0):
        return 0.0
    sig = params.power * d[v] ** -params.alpha
    noise = params.noise + sum(params.power * d[w] ** -params.alpha for w in T if w != v)
    return sig / noise


def interference_excluding_nearest(u_point, transmitters, topology: NetworkTopology,
                                   params: SinrParams) -> float:
    pos = topology.positions
    T = sorted(set(transmitters))
    d = np.sqrt(((pos[T] - np.asarray(u_point, dtype=float)) ** 2).sum(axis=1))
    nearest = int(np.argmin(d))
    return float(sum(params.power * d[i] ** -params.alpha for i in range(len(T)) if i != nearest))


@dataclass
class FactReport:
    name: str
    instances: int = 0
    skipped: int = 0
    counterexamples: int = 0
    first_failure: dict | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.counterexamples == 0


def _polar(rng, r):
    t = rng.uniform(0, 2 * math.pi)
    return [r * math.cos(t), r * math.sin(t)]


def _instance(points) -> NetworkTopology:
    return NetworkTopology.from_positions(np.array(points, dtype=float), EUCLIDEAN_PLANE, 0.5)


def close_interference_instance(rng, params: SinrParams):
    """Receiver at the origin, transmitter at distance x <= 2^(-1/alpha),
    interferers strictly farther away.  Returns (topology, transmitters,
    receiver, v, x, holds)."""
    x = rng.uniform(0.01, 1.0) * 2 ** (-1 / params.alpha)
    pts = [[0.0, 0.0], _polar(rng, x)]
    for _ in range(rng.integers(0, 6)):
        pts.append(_polar(rng, x * (1 + rng.exponential(1.5)) + 1e-9))
    topo = _instance(pts)
    T = list(range(1, len(pts)))
    budget = params.noise / (2 * x**params.alpha)
    holds = interference_excluding_nearest(pts[0], T, topo, params) <= budget * (1 - 1e-9)
    return topo, T, 0, 1, x, holds


def far_reception_instance(rng, params: SinrParams):
    """Receiver at the origin, transmitter at distance 1 - x, interferers
    farther away; hypothesis: interference at most N * alpha * x."""
    x = rng.uniform(0.01, 0.99)
    pts = [[0.0, 0.0], _polar(rng, 1 - x)]
    for _ in range(rng.integers(0, 6)):
        pts.append(_polar(rng, (1 - x) * (1 + rng.exponential(3.0)) + 1e-9))
    topo = _instance(pts)
    T = list(range(1, len(pts)))
    holds = interference_excluding_nearest(pts[0], T, topo, params) <= params.noise * params.alpha * x * (1 - 1e-9)
    return topo, T, 0, 1, x, holds


def _disk_grid(center, radius, k=9):
    g = np.linspace(-radius, radius, k)
    pts = [(center[0] + a, center[1] + b) for a in g for b in g if a * a + b * b <= radius * radius]
    return pts


def on_behalf_instance(rng, params: SinrParams, epsilon: float = 0.5):
    """Transmitter v at the origin with a few stations near it, their
    neighbors, and far interferers.  Hypothesis: v is heard at every
    sampled point and station within 1 - eps/2."""
    pts = [[0.0, 0.0]]
    for _ in range(rng.integers(1, 4)):                       # stations in B(v, eps/2)
        pts.append(_polar(rng, rng.uniform(0.01, epsilon / 2)))
    close = list(range(len(pts)))
    for w in list(close):
        for _ in range(rng.integers(0, 3)):                   # their neighbors
            p = _polar(rng, rng.uniform(0.01, 1 - epsilon))
            pts.append([pts[w][0] + p[0], pts[w][1] + p[1]])
    T = [0]
    for _ in range(rng.integers(0, 5)):                       # far interferers
        pts.append(_polar(rng, rng.uniform(1.2, 6.0)))
        T.append(len(pts) - 1)
    topo = _instance(pts)
    reach = 1 - epsilon / 2
    probes = _disk_grid((0.0, 0.0), reach)
    pos = topo.positions
    probes += [tuple(pos[i]) for i in range(topo.n) if i != 0 and math.hypot(*pos[i]) <= reach]
    holds = all(sinr_at_point(pt, 0, T, topo, params) >= params.beta * (1 + 1e-9) for pt in probes)
    d = topo.distances()
    near = [w for w in range(topo.n) if d[0, w] <= epsilon / 2]
    targets = sorted({u for w in near for u in topo.adjacency[w]} - set(T))
    return topo, T, targets, holds


def check_reception_facts(rng: np.random.Generator | int, trials: int,
                          params: SinrParams | None = None) -> dict[str, FactReport]:
    """Sample instances of the three reception facts; wherever the
    hypothesis holds, the engine must deliver what the fact promises."""
    if trials < 1:
        raise PreconditionError("trials must be at least 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    params = params or SinrParams()
    reports = {k: FactReport(k) for k in ("close-interference", "far-reception", "on-behalf")}
    for name, make in (("close-interference", close_interference_instance),
                       ("far-reception", far_reception_instance)):
        rep = reports[name]
        for _ in range(trials):
            topo, T, u, v, x, holds = make(rng, params)
            if not holds:
                rep.skipped += 1
                continue
            rep.instances += 1
            out = resolve_round(T, None, params, topo)
            if out.received.get(u, (None,))[0] != v:
                rep.counterexamples += 1
                rep.first_failure = rep.first_failure or {
                    "positions": topo.positions.tolist(), "transmitters": T, "receiver": u, "x": x}
    rep = reports["on-behalf"]
    for _ in range(trials):
        topo, T, targets, holds = on_behalf_instance(rng, params)
        if not holds:
            rep.skipped += 1
            continue
        rep.instances += 1
        out = resolve_round(T, None, params, topo)
        missed = [u for u in targets if out.received.get(u, (None,))[0] != 0]
        if missed:
            rep.counterexamples += 1
            rep.first_failure = rep.first_failure or {
                "positions": topo.positions.tolist(), "transmitters": T, "missed": missed}
    return reports


__all__ = [
    "FactResult", "exactly_one_probability", "fact_sum_batch", "check_fact_sum",
    "fact_notransmit_batch", "check_fact_notransmit", "random_probability_vectors",
    "sinr_at_point", "interference_excluding_nearest", "FactReport", "check_reception_facts",
]
