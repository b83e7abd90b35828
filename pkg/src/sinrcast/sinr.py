"""Physical-layer resolution under the SINR reception rule.

A receiver ``u`` outside the transmitter set ``T`` decodes ``v`` in ``T`` when

    P * d(v,u)^-alpha / (N + sum_{w in T, w != v} P * d(w,u)^-alpha) >= beta.

With beta >= 1 at most one transmitter can satisfy this at any receiver, and
it is necessarily the strongest one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, InvariantViolation
from .geometry import NetworkTopology


@dataclass(frozen=True)
class SinrParams:
    alpha: float = 3.0
    beta: float = 1.0
    noise: float = 1.0
    power: float | None = None  # defaults to noise * beta, i.e. range 1
    epsilon: float = 0.5

    def __post_init__(self):
        if self.power is None:
            object.__setattr__(self, "power", self.noise * self.beta)
        if self.beta < 1:
            raise InvalidInputError("beta must be at least 1")
        if self.noise <= 0 or self.power <= 0:
            raise InvalidInputError("noise and power must be positive")
        if not 0 < self.epsilon < 1:
            raise InvalidInputError("epsilon must lie in (0,1)")

    def check_space(self, gamma: float) -> None:
        if self.alpha <= gamma:
            raise InvalidInputError(f"path loss alpha={self.alpha} must exceed the growth dimension {gamma}")

    def with_epsilon(self, epsilon: float) -> "SinrParams":
        return SinrParams(self.alpha, self.beta, self.noise, self.power, epsilon)


def comm_range(params: SinrParams) -> float:
    return (params.power / (params.noise * params.beta)) ** (1.0 / params.alpha)


def _distance(topology: NetworkTopology, a: int, b: int) -> float:
    d = topology.space.dist(topology.point(a), topology.point(b))
    if d == 0.0:
        raise DegenerateGeometryError(f"stations {a} and {b} coincide")
    return d


def sinr_ratio(v: int, u: int, transmitters: Iterable[int], params: SinrParams,
               topology: NetworkTopology) -> float:
    T = set(transmitters)
    if v not in T:
        raise InvalidInputError(f"station {v} is not transmitting")
    if u == v:
        raise InvalidInputError("sender and receiver must differ")
    signal = params.power * _distance(topology, v, u) ** -params.alpha
    interference = sum(params.power * _distance(topology, w, u) ** -params.alpha
                       for w in sorted(T) if w != v)
    return signal / (params.noise + interference)


def interference_at(u: int, transmitters: Iterable[int], params: SinrParams,
                    topology: NetworkTopology) -> float:
    """Total power at ``u`` from all transmitters except the nearest one
    (ties go to the smallest id)."""
    T = sorted(set(transmitters))
    if not T:
        raise InvalidInputError("transmitter set must be nonempty")
    if u in T:
        raise InvalidInputError(f"receiver {u} is itself transmitting")
    d = {w: _distance(topology, w, u) for w in T}
    nearest = min(d, key=lambda w: (d[w], w))
    return sum(params.power * d[w] ** -params.alpha for w in T if w != nearest)


@dataclass
class RoundOutcome:
    round_index: int
    transmitters: frozenset[int]
    received: dict[int, tuple[int, object]]
    interference_log: dict[int, float] | None = field(default=None, repr=False)


class SinrEngine:
    """Precomputed received-power matrix for one topology.

    ``gain[v, u]`` is the power of ``v``'s signal at ``u``; the diagonal is 0.
    """

    def __init__(self, topology: NetworkTopology, params: SinrParams):
        params.check_space(topology.space.gamma)
        self.topology = topology
        self.params = params
        d = topology.distances()
        n = topology.n
        off = ~np.eye(n, dtype=bool)
        if n > 1 and np.any(d[off] == 0.0):
            i, j = np.argwhere((d == 0.0) & off)[0]
            raise DegenerateGeometryError(f"stations {i} and {j} coincide")
        with np.errstate(divide="ignore"):
            gain = params.power * d ** -params.alpha
        gain[~off] = 0.0
        self.gain = gain
        self.n = n

    def resolve_mask(self, tx: np.ndarray, *, check_unique: bool = True,
                     first_round: int | None = None) -> np.ndarray:
        """Resolve a stack of rounds at once.

        ``tx`` is a boolean (rounds, n) matrix.  Returns an int (rounds, n)
        matrix holding the decoded sender per receiver, or -1.
        """
        tx = np.asarray(tx, dtype=bool)
        if tx.ndim == 1:
            return self.resolve_mask(tx[None, :], check_unique=check_unique,
                                     first_round=first_round)[0]
        R, n = tx.shape
        senders = np.full((R, n), -1, dtype=np.int64)
        rounds, who = np.nonzero(tx)
        if who.size == 0:
            return senders
        sig = self.gain[who]                              # (E, n)
        starts = np.flatnonzero(np.r_[True, rounds[1:] != rounds[:-1]])
        total = np.add.reduceat(sig, starts, axis=0)      # (G, n) summed power per round
        group = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, rounds.size]))
        p = self.params
        sinr = sig / (p.noise + total[group] - sig)
        ok = (sinr >= p.beta) & ~tx[rounds]
        if not ok.any():
            return senders
        if check_unique:
            counts = np.add.reduceat(ok.astype(np.int64), starts, axis=0)
            if counts.max() > 1:
                g, u = np.argwhere(counts > 1)[0]
                r = int(rounds[starts[g]]) + (first_round or 0)
                raise InvariantViolation("unique-decoding", r, f"receiver {u} decodes two senders")
        e, u = np.nonzero(ok)
        senders[rounds[e], u] = who[e]
        return senders

    def total_power(self, tx: np.ndarray) -> np.ndarray:
        return np.asarray(tx, dtype=float) @ self.gain


def resolve_round(transmitters: Iterable[int], messages: Mapping[int, object] | None,
                  params: SinrParams, topology: NetworkTopology, *, round_index: int = 0,
                  engine: SinrEngine | None = None, log_interference: bool = False) -> RoundOutcome:
    engine = engine or SinrEngine(topology, params)
    T = frozenset(int(t) for t in transmitters)
    if any(not 0 <= t < engine.n for t in T):
        raise InvalidInputError("transmitter ids must be station ids")
    mask = np.zeros(engine.n, dtype=bool)
    mask[list(T)] = True
    senders = engine.resolve_mask(mask, first_round=round_index)
    messages = messages or {}
    received = {int(u): (int(s), messages.get(int(s))) for u, s in enumerate(senders) if s >= 0}
    log = None
    if log_interference:
        log = {u: float(x) for u, x in enumerate(engine.total_power(mask))}
    return RoundOutcome(round_index, T, received, log)


def decodes_at_distance(distance: float, interference: float, params: SinrParams) -> bool:
    """Whether a lone signal from ``distance`` survives ``interference``."""
    if distance <= 0:
        raise DegenerateGeometryError("zero distance")
    return params.power * distance ** -params.alpha / (params.noise + interference) >= params.beta


__all__ = [
    "SinrParams", "comm_range", "sinr_ratio", "interference_at", "RoundOutcome",
    "SinrEngine", "resolve_round", "decodes_at_distance",
]
