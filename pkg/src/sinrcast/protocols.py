"""End-to-end protocols built on the coloring: broadcast without and with
spontaneous wake-up, the two wake-up variants, consensus and leader election.

Every protocol runs on one shared round clock (a ``Channel``) and returns a
``RunSummary`` together with the ``Trace`` of the run.  The harness is
omniscient: it stops simulating as soon as the goal is reached, while the
stations themselves would keep following their fixed-length schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .channel import Channel
from .coloring import ConstantProfile, log_n, schedule_length, stabilize_probability
from .errors import InvalidInputError, InvariantViolation, TopologyDisconnectedError
from .geometry import NetworkTopology
from .rng import CounterStream
from .sinr import SinrEngine, SinrParams
from .trace import Trace

MESSAGE_KINDS = ("hello", "source", "wakeup", "consensus-bit")

# speculative window bounds for the relay loop
_MIN_WINDOW, _MAX_WINDOW = 4, 256


@dataclass(frozen=True)
class ProtocolMessage:
    payload: int
    elapsed_rounds: int
    kind: str = "source"

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise InvalidInputError(f"unknown message kind {self.kind!r}")
        if self.elapsed_rounds < 0:
            raise InvalidInputError("elapsed_rounds must be nonnegative")


@dataclass
class WakeSchedule:
    """Adversarial spontaneous wake-up rounds; ``math.inf`` means never."""

    wake: dict[int, float]

    def __post_init__(self):
        for s, r in self.wake.items():
            if r != math.inf and (r < 0 or r != int(r)):
                raise InvalidInputError(f"station {s}: wake round must be a nonnegative integer or inf")

    @classmethod
    def simultaneous(cls, stations, round_index: int = 0) -> "WakeSchedule":
        return cls({int(s): round_index for s in stations})

    def rounds(self, n: int) -> np.ndarray:
        out = np.full(n, math.inf)
        for s, r in self.wake.items():
            if not 0 <= s < n:
                raise InvalidInputError(f"station {s} is not in the network")
            out[s] = r
        return out

    def first_wake(self) -> float:
        return min(self.wake.values(), default=math.inf)

    def format(self) -> str:
        lines = ["# station_id, wake_round"]
        for s in sorted(self.wake):
            r = self.wake[s]
            lines.append(f"{s}, {'inf' if r == math.inf else int(r)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "WakeSchedule":
        wake = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise InvalidInputError(f"line {lineno}: expected 'station_id, wake_round'")
            try:
                s = int(parts[0])
                r = math.inf if parts[1].lower() == "inf" else int(parts[1])
            except ValueError:
                raise InvalidInputError(f"line {lineno}: cannot parse {raw!r}") from None
            if s in wake:
                raise InvalidInputError(f"line {lineno}: station {s} listed twice")
            wake[s] = r
        return cls(wake)

    @classmethod
    def read(cls, path) -> "WakeSchedule":
        return cls.parse(Path(path).read_text())


@dataclass
class RunSummary:
    protocol: str
    rounds: int | None            # completion rounds, None if not completed
    first_informed: np.ndarray    # per station round of first information, -1 never
    success: bool
    invariants: dict[str, bool]
    seed: int
    profile_mode: str
    budget: int = 0
    bound: int = 0
    trace_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        """Key-value document, one ``key = value`` per line."""
        rows = [
            ("protocol", self.protocol),
            ("seed", self.seed),
            ("profile_mode", self.profile_mode),
            ("success", str(self.success).lower()),
            ("rounds", "none" if self.rounds is None else self.rounds),
            ("bound", self.bound),
            ("budget", self.budget),
            ("trace_hash", self.trace_hash),
            ("informed", int((self.first_informed >= 0).sum())),
            ("stations", len(self.first_informed)),
        ]
        rows += [(f"invariant.{k}", "pass" if v else "fail") for k, v in sorted(self.invariants.items())]
        rows += [(f"extra.{k}", v) for k, v in sorted(self.extra.items())]
        return "".join(f"{k} = {v}\n" for k, v in rows)


# ---------------------------------------------------------------------------
# shared pieces


def transmit_probability(colors: np.ndarray, profile: ConstantProfile, n: int, epsilon: float) -> np.ndarray:
    """Per-round relay probability ``p_v / (c_bc * eps * log n)``, capped at 1."""
    scale = profile.c_bc * epsilon * log_n(n)
    return np.minimum(np.nan_to_num(colors, nan=0.0) / scale, 1.0)


def transmit_rounds(profile: ConstantProfile, n: int) -> int:
    """Length of a relay stretch: ``ceil(a_tx * log^2 n)``."""
    return math.ceil(profile.a_tx * log_n(n) ** 2)


def phase_length(profile: ConstantProfile, n: int) -> int:
    return schedule_length(profile, n).total + transmit_rounds(profile, n)


def nos_broadcast_bound(profile: ConstantProfile, n: int, diameter: int) -> int:
    return diameter * phase_length(profile, n)


def s_broadcast_bound(profile: ConstantProfile, n: int, diameter: int) -> int:
    lg = log_n(n)
    return math.ceil(profile.a_sb * (diameter * lg + lg * lg))


def _budget(bound: int, mult: float) -> int:
    return int(math.ceil(mult * bound))


def _diameter(topology: NetworkTopology) -> int:
    if topology.diameter is None:
        raise TopologyDisconnectedError(topology.components)
    return topology.diameter


class _Informed:
    """Who knows the payload, since when, and from whom.

    Carries the invariant checks every protocol shares: payload integrity
    and monotone growth of the informed set.
    """

    def __init__(self, n: int, payload: int, trace: Trace | None, kind: str):
        self.n = n
        self.payload = payload
        self.at = np.full(n, -1, dtype=np.int64)
        self.held = np.full(n, -1, dtype=np.int64)  # payload held by each station
        self.first_message: dict[int, ProtocolMessage] = {}
        self.trace = trace
        self.kind = kind
        self.count_history: list[int] = []

    @property
    def mask(self) -> np.ndarray:
        return self.at >= 0

    def all(self) -> bool:
        return bool((self.at >= 0).all())

    def seed_station(self, s: int, round_index: int, event: str = "inform") -> None:
        if self.at[s] >= 0:
            return
        self.at[s] = round_index
        self.held[s] = self.payload
        if self.trace is not None:
            self.trace.add(round_index, s, event, self.payload, -1)

    def deliver(self, round_index: int, receiver: int, sender: int) -> None:
        """``receiver`` decoded a message from ``sender`` in ``round_index``."""
        if self.at[receiver] >= 0:
            return
        if self.held[sender] != self.payload:
            raise InvariantViolation("payload-integrity", round_index,
                                     f"station {sender} relayed without holding the payload")
        msg = ProtocolMessage(int(self.held[sender]), round_index, self.kind)
        self.at[receiver] = round_index
        self.held[receiver] = msg.payload
        self.first_message[receiver] = msg
        if self.trace is not None:
            self.trace.add(round_index, receiver, "inform", msg.payload, sender)

    def absorb(self, window, senders_ok: np.ndarray | None = None, upto: int | None = None) -> None:
        """Record every first reception inside ``window`` (first ``upto`` rows)."""
        rows = window.senders if upto is None else window.senders[:upto]
        heard = (rows >= 0) & (self.at < 0)[None, :]
        if not heard.any():
            self._note()
            return
        first = np.where(heard.any(axis=0), heard.argmax(axis=0), -1)
        for u in np.flatnonzero(first >= 0):
            r = int(first[u])
            snd = int(rows[r, u])
            if senders_ok is not None and not senders_ok[snd]:
                continue
            self.deliver(window.start + r, int(u), snd)
        self._note()

    def _note(self) -> None:
        c = int(self.mask.sum())
        if self.count_history and c < self.count_history[-1]:
            raise InvariantViolation("monotone-informed", -1, "informed set shrank")
        self.count_history.append(c)

    def check(self) -> bool:
        ok = bool(np.all(self.held[self.mask] == self.payload))
        return ok and all(b >= a for a, b in zip(self.count_history, self.count_history[1:]))


def _relay(channel: Channel, informed: _Informed, probs: np.ndarray, end_round: int, *,
           expire_after: int | None = None, join: bool = True) -> None:
    """Informed stations transmit with ``probs`` until ``end_round`` or until
    everyone is informed.

    With ``join`` newly informed stations start relaying the round after
    their first reception; with ``expire_after`` a station stops relaying
    that many rounds after it was informed.  Windows are simulated
    speculatively and committed up to the first round that changes the
    transmitting set, which keeps the result identical to a round-by-round
    loop.
    """
    step = 16
    relaying = informed.mask.copy()
    while channel.round < end_round and not informed.all():
        active = relaying & informed.mask
        if expire_after is not None:
            active &= informed.at + 1 + expire_after > channel.round
        if not active.any():
            break
        length = min(step, end_round - channel.round)
        if expire_after is not None:
            nxt = (informed.at + 1 + expire_after)[active]
            length = max(1, min(length, int(nxt.min()) - channel.round))
        w = channel.simulate(np.where(active, probs, 0.0), length)
        fresh = (w.senders >= 0) & ~informed.mask[None, :]
        rows = np.flatnonzero(fresh.any(axis=1))
        if join and rows.size:
            k = int(rows[0]) + 1
            channel.commit(w, k)
            informed.absorb(w, upto=k)
            relaying |= informed.mask
            step = max(_MIN_WINDOW, step // 2)
        else:
            if rows.size and informed.n:
                # stop exactly when the last station is reached
                missing = int((~informed.mask).sum())
                cover = np.zeros(informed.n, dtype=bool)
                cut = len(w)
                for r in rows:
                    cover |= fresh[r]
                    if int(cover.sum()) >= missing:
                        cut = int(r) + 1
                        break
                channel.commit(w, cut)
                informed.absorb(w, upto=cut)
            else:
                channel.commit(w)
                informed.absorb(w)
            step = min(_MAX_WINDOW, step * 2)


# ---------------------------------------------------------------------------
# broadcast without spontaneous wake-up


def _phase_engine(channel: Channel, topology: NetworkTopology, params: SinrParams,
                  profile: ConstantProfile, informed: _Informed, starts: np.ndarray,
                  end_round: int, stop_when) -> dict:
    """Phases of fixed length aligned to round 0.

    At each phase boundary the active set is every station informed before
    the boundary plus stations whose own start round has come.  A phase is
    a coloring of the active set (hellos carry the payload) followed by a
    relay stretch in which only that active set transmits.
    """
    n = topology.n
    sched = schedule_length(profile, n)
    l_tx = transmit_rounds(profile, n)
    l_phase = sched.total + l_tx
    trace = channel.trace
    joined_at = np.full(n, -1, dtype=np.int64)
    phases = 0
    synced = True
    while channel.round < end_round and not stop_when():
        boundary = channel.round
        if boundary % l_phase:
            raise InvariantViolation("phase-synchrony", boundary, "phase does not start on a boundary")
        for s in np.flatnonzero((starts <= boundary) & ~informed.mask):
            informed.seed_station(int(s), int(starts[s]), event="wake")
        active = informed.mask & (informed.at < boundary) | (starts <= boundary)
        if not active.any():
            pending = starts[starts > boundary]
            if pending.size == 0:
                break
            nxt = int(pending.min())
            target = min(end_round, -(-nxt // l_phase) * l_phase)
            channel.idle(target - boundary)
            continue
        fresh = active & (joined_at < 0)
        for s in np.flatnonzero(fresh):
            msg = informed.first_message.get(int(s))
            if msg is not None:
                # a relayed station derives its phase from the counter it got
                expect = (msg.elapsed_rounds // l_phase + 1) * l_phase
                synced &= expect == boundary
        joined_at[fresh] = boundary
        if trace is not None:
            trace.add(boundary, -1, "phase-boundary", phases, int(active.sum()))
        phases += 1
        res = stabilize_probability(channel, active, profile, n)
        for u in np.flatnonzero((res.first_heard >= 0) & ~informed.mask):
            # the only transmitters in the coloring part are active stations
            informed.deliver(int(res.first_heard[u]), int(u), int(res.first_sender[u]))
        informed._note()
        if stop_when():
            break
        probs = transmit_probability(res.colors, profile, n, params.epsilon)
        stop = min(end_round, boundary + l_phase)
        _relay(channel, informed, np.where(active, probs, 0.0), stop, join=False)
        if stop_when():
            break
        channel.idle(stop - channel.round)
    return {"phases": phases, "phase_length": l_phase, "phase_synchrony": synced}


def run_nos_broadcast(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                      source: int, seed: int, budget: int | None = None, *,
                      budget_mult: float = 4.0, payload: int = 1, record: bool = True):
    """Broadcast where only informed stations take part.  Returns
    ``(summary, trace)``."""
    n = topology.n
    if not 0 <= source < n:
        raise InvalidInputError("source is not a station")
    D = _diameter(topology)
    profile = profile.for_network(n)
    engine = SinrEngine(topology, params)
    trace = Trace() if record else None
    channel = Channel(engine, seed, trace=trace)
    bound = nos_broadcast_bound(profile, n, D)
    budget = _budget(bound, budget_mult) if budget is None else int(budget)
    informed = _Informed(n, payload, trace, "source")
    informed.seed_station(source, 0)
    starts = np.full(n, np.inf)
    starts[source] = 0
    info = _phase_engine(channel, topology, params, profile, informed, starts, budget, informed.all)
    done = informed.all()
    rounds = _completion(informed.at, exclude=[source]) if done else None
    inv = {"payload-integrity": informed.check(), "monotone-informed": informed.check(),
           "phase-synchrony": info["phase_synchrony"], "unique-decoding": True}
    summary = RunSummary("nos-broadcast", rounds, informed.at.copy(), done, inv, seed, profile.mode,
                         budget, bound, trace.digest() if trace else "",
                         {"phases": info["phases"], "phase_length": info["phase_length"], "diameter": D})
    return summary, trace


def _completion(at: np.ndarray, exclude=(), origin: int = 0) -> int:
    mask = np.ones(len(at), dtype=bool)
    mask[list(exclude)] = False
    if not mask.any():
        return 0
    return int(at[mask].max()) + 1 - origin


# ---------------------------------------------------------------------------
# broadcast with spontaneous wake-up


def _coloring_profile(profile: ConstantProfile, params: SinrParams) -> ConstantProfile:
    """Profile for the all-station coloring at epsilon/3."""
    return profile.rederive(params.with_epsilon(params.epsilon / 3.0)).for_network(profile.n)


def run_s_broadcast(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                    source: int, seed: int, budget: int | None = None, *,
                    budget_mult: float = 4.0, payload: int = 1, record: bool = True):
    """All stations color first; then the source transmits once and every
    informed station relays for ``transmit_rounds`` rounds.  Completion is
    counted from the source round."""
    n = topology.n
    if not 0 <= source < n:
        raise InvalidInputError("source is not a station")
    D = _diameter(topology)
    profile = profile.for_network(n)
    engine = SinrEngine(topology, params)
    trace = Trace() if record else None
    channel = Channel(engine, seed, trace=trace)
    col = stabilize_probability(channel, np.ones(n, dtype=bool), _coloring_profile(profile, params), n)
    src_round = channel.round
    bound = s_broadcast_bound(profile, n, D)
    budget = _budget(bound, budget_mult) if budget is None else int(budget)
    informed = _Informed(n, payload, trace, "source")
    informed.seed_station(source, src_round)
    w = channel.run(np.eye(1, n, source)[0], 1)
    informed.absorb(w)
    probs = transmit_probability(col.colors, profile, n, params.epsilon)
    _relay(channel, informed, probs, src_round + max(budget, 1), expire_after=transmit_rounds(profile, n))
    done = informed.all()
    rounds = _completion(informed.at, origin=src_round) if done else None
    if done and n == 1:
        rounds = 1
    inv = {"payload-integrity": informed.check(), "monotone-informed": informed.check(),
           "unique-decoding": True}
    summary = RunSummary("s-broadcast", rounds, informed.at.copy(), done, inv, seed, profile.mode,
                         budget, bound, trace.digest() if trace else "",
                         {"coloring_rounds": col.rounds, "source_round": src_round, "diameter": D})
    return summary, trace


# ---------------------------------------------------------------------------
# wake-up


def _awake_rounds(informed: _Informed, wake: np.ndarray) -> np.ndarray:
    """Round each station is awake: its spontaneous wake round or the round
    after its first reception, whichever is earlier."""
    recv = np.where(informed.at >= 0, informed.at + 1, np.inf)
    own = np.where(np.isfinite(wake), wake, np.inf)
    # stations seeded at their start were awake since their wake round
    return np.minimum(recv, own)


def run_wakeup_adhoc(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                     schedule: WakeSchedule, seed: int, *, budget_mult: float = 4.0,
                     period: int | None = None, record: bool = True):
    """Each spontaneously woken station waits for the next multiple of the
    period ``T`` (the broadcast budget) and then acts as a broadcast source;
    stations woken by a message join at the next phase boundary."""
    n = topology.n
    wake = schedule.rounds(n)
    if not np.isfinite(wake).any():
        raise InvalidInputError("wake-up needs at least one spontaneous station")
    D = _diameter(topology)
    profile = profile.for_network(n)
    l_phase = phase_length(profile, n)
    if period is None:
        period = max(1, math.ceil(budget_mult)) * max(D, 1) * l_phase
    if period % l_phase:
        raise InvalidInputError("the period must be a multiple of the phase length")
    engine = SinrEngine(topology, params)
    trace = Trace() if record else None
    channel = Channel(engine, seed, trace=trace)
    first = int(wake[np.isfinite(wake)].min())
    starts = np.where(np.isfinite(wake), np.ceil(wake / period) * period, np.inf)
    informed = _Informed(n, 1, trace, "wakeup")
    end = first + int(math.ceil(budget_mult)) * period

    def awake_all() -> bool:
        return bool(np.all(np.isfinite(wake) & (wake <= channel.round) | informed.mask))

    info = _phase_engine(channel, topology, params, profile, informed, starts, end, awake_all)
    awake = _awake_rounds(informed, wake)
    done = bool(np.isfinite(awake).all())
    rounds = int(max(awake.max(), first) - first) if done else None
    inv = {"payload-integrity": informed.check(), "monotone-informed": informed.check(),
           "phase-synchrony": info["phase_synchrony"], "unique-decoding": True}
    summary = RunSummary("wakeup-adhoc", rounds, np.where(np.isfinite(awake), awake, -1).astype(np.int64),
                         done, inv, seed, profile.mode, end - first, 2 * period,
                         trace.digest() if trace else "",
                         {"period": period, "first_wake": first, "phases": info["phases"]})
    return summary, trace


def _colored_execution(channel: Channel, params: SinrParams, profile: ConstantProfile,
                       base_colors: np.ndarray, initiators: np.ndarray, informed: _Informed,
                       relay_rounds: int, coloring_profile: ConstantProfile | None = None) -> bool:
    """One wake-up execution on an established coloring.

    Initiators color themselves afresh (``q``); every other station has
    ``q = 0``.  Awake stations then relay with ``(p + q)/(c_bc eps log n)``.
    Returns whether everybody is awake at the end.
    """
    n = channel.n
    coloring_profile = coloring_profile or _coloring_profile(profile, params)
    for s in np.flatnonzero(initiators & ~informed.mask):
        informed.seed_station(int(s), channel.round, event="wake")
    q = np.zeros(n)
    if initiators.any():
        res = stabilize_probability(channel, initiators, coloring_profile, n)
        q = np.nan_to_num(res.colors, nan=0.0)
        for u in np.flatnonzero((res.first_heard >= 0) & ~informed.mask):
            informed.deliver(int(res.first_heard[u]), int(u), int(res.first_sender[u]))
    probs = transmit_probability(base_colors + q, profile, n, params.epsilon)
    _relay(channel, informed, probs, channel.round + relay_rounds,
           expire_after=transmit_rounds(profile, n))
    return informed.all()


def colored_execution_length(profile: ConstantProfile, params: SinrParams, n: int, diameter: int,
                             budget_mult: float = 4.0) -> tuple[int, int]:
    """(coloring rounds, relay rounds) of one colored wake-up execution."""
    col = schedule_length(_coloring_profile(profile.for_network(n), params), n).total
    return col, _budget(s_broadcast_bound(profile, n, diameter), budget_mult)


def _base_coloring(channel: Channel, params: SinrParams, profile: ConstantProfile) -> np.ndarray:
    n = channel.n
    res = stabilize_probability(channel, np.ones(n, dtype=bool), _coloring_profile(profile, params), n)
    return res.colors


def run_wakeup_colored(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                       base_colors, schedule: WakeSchedule, seed: int, *,
                       budget_mult: float = 4.0, record: bool = True):
    """Wake-up when every station already holds a color ``p_v``.

    Executions start at multiples of their fixed length; a spontaneous
    station takes part as initiator in the first one starting at or after
    its wake round, unless a message woke it before.
    """
    n = topology.n
    if base_colors is None:
        raise InvalidInputError("wake-up with an established coloring needs the base coloring")
    base = np.asarray(base_colors, dtype=float)
    if base.shape != (n,) or np.isnan(base).any() or (base < 0).any():
        raise InvalidInputError("base coloring must give every station a nonnegative color")
    wake = schedule.rounds(n)
    if not np.isfinite(wake).any():
        raise InvalidInputError("wake-up needs at least one spontaneous station")
    D = _diameter(topology)
    profile = profile.for_network(n)
    l_col, l_rel = colored_execution_length(profile, params, n, D, budget_mult)
    period = l_col + max(l_rel, 1)
    engine = SinrEngine(topology, params)
    trace = Trace() if record else None
    first = int(wake[np.isfinite(wake)].min())
    start = -(-first // period) * period
    channel = Channel(engine, seed, trace=trace, start_round=start)
    informed = _Informed(n, 1, trace, "wakeup")
    executions = 0
    end = start + int(math.ceil(budget_mult)) * period
    while channel.round < end and not informed.all():
        t0 = channel.round
        initiators = (wake <= t0) & ~informed.mask
        if initiators.any() or informed.mask.any():
            _colored_execution(channel, params, profile, base, initiators, informed, l_rel)
            executions += 1
        if informed.all():
            break
        channel.idle(t0 + period - channel.round)
    awake = _awake_rounds(informed, wake)
    done = bool(np.isfinite(awake).all())
    rounds = int(max(awake.max(), first) - first) if done else None
    inv = {"payload-integrity": informed.check(), "monotone-informed": informed.check(),
           "unique-decoding": True}
    summary = RunSummary("wakeup-colored", rounds, np.where(np.isfinite(awake), awake, -1).astype(np.int64),
                         done, inv, seed, profile.mode, end - first, period,
                         trace.digest() if trace else "",
                         {"period": period, "executions": executions, "first_wake": first})
    return summary, trace


# ---------------------------------------------------------------------------
# consensus and leader election


def bit_length(x: int) -> int:
    """Number of bits used for values in [0, x]: ceil(log2(x+1))."""
    if x < 1:
        raise InvalidInputError("x must be at least 1")
    return int(x).bit_length()


def _consensus_core(channel: Channel, params: SinrParams, profile: ConstantProfile,
                    values: np.ndarray, x: int, diameter: int, budget_mult: float) -> dict:
    n = channel.n
    bits = bit_length(x)
    base = _base_coloring(channel, params, profile)
    col_profile = _coloring_profile(profile, params)
    l_col, l_rel = colored_execution_length(profile, params, n, diameter, budget_mult)
    period = l_col + max(l_rel, 1)
    prefix = np.zeros(n, dtype=np.int64)   # each station's view of the agreed prefix
    completed = True
    iterations = 0
    for i in range(bits):
        shift = bits - 1 - i
        own_prefix = values >> (shift + 1)
        own_bit = (values >> shift) & 1
        initiators = (own_prefix == prefix) & (own_bit == 0)
        t0 = channel.round
        informed = _Informed(n, 0, channel.trace, "consensus-bit")
        if initiators.any():
            ok = _colored_execution(channel, params, profile, base, initiators, informed, l_rel,
                                    col_profile)
            completed &= ok
        iterations += 1
        heard = informed.mask
        prefix = (prefix << 1) | np.where(heard, 0, 1)
        channel.idle(t0 + period - channel.round)
    return {"outputs": prefix, "completed": completed, "iterations": iterations, "period": period}


def run_consensus(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                  values: Mapping[int, int] | np.ndarray, seed: int, x: int | None = None, *,
                  budget_mult: float = 4.0, record: bool = True):
    """Agree on the minimum input, one bit per colored wake-up execution,
    most significant bit first."""
    n = topology.n
    if isinstance(values, Mapping):
        if set(values) != set(range(n)):
            raise InvalidInputError("every station needs an input value")
        vals = np.array([int(values[i]) for i in range(n)], dtype=np.int64)
    else:
        vals = np.asarray(values, dtype=np.int64)
    if vals.shape != (n,):
        raise InvalidInputError("one input value per station")
    x = max(int(vals.max()), 1) if x is None else int(x)
    if (vals < 0).any() or (vals > x).any():
        raise InvalidInputError(f"inputs must lie in [0, {x}]")
    D = _diameter(topology)
    profile = profile.for_network(n)
    trace = Trace() if record else None
    channel = Channel(SinrEngine(topology, params), seed, trace=trace)
    out = _consensus_core(channel, params, profile, vals, x, D, budget_mult)
    outputs = out["outputs"]
    agree = bool(np.all(outputs == outputs[0]))
    valid = bool(np.all(outputs == vals.min()))
    inv = {"agreement": agree, "validity": valid, "unique-decoding": True}
    summary = RunSummary("consensus", channel.round if out["completed"] else None,
                         np.zeros(n, dtype=np.int64), out["completed"] and agree and valid, inv, seed,
                         profile.mode, out["iterations"] * out["period"], out["iterations"] * out["period"],
                         trace.digest() if trace else "",
                         {"completed": out["completed"], "output": int(outputs[0]) if agree else -1,
                          "iterations": out["iterations"], "x": x})
    summary.extra["outputs"] = outputs.tolist()
    return summary, trace


def run_leader_election(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                        seed: int, *, budget_mult: float = 4.0, max_attempts: int = 10,
                        record: bool = True):
    """Stations draw IDs uniformly from {1..n^3} and agree on the smallest.
    A tie at the minimum is invisible to stations; the harness reports it
    and re-runs with fresh IDs."""
    n = topology.n
    D = _diameter(topology)
    profile = profile.for_network(n)
    x = max(n**3, 1)
    trace = Trace() if record else None
    channel = Channel(SinrEngine(topology, params), seed, trace=trace)
    attempts = 0
    collisions = 0
    leader = -1
    ok = False
    agreed_all = True
    first_ids = None
    while attempts < max_attempts:
        ids = CounterStream(seed, "ids", attempts).integers(0, np.arange(n), x) + 1
        if first_ids is None:
            first_ids = ids
        attempts += 1
        if n == 1:
            leader, ok = 0, True
            break
        out = _consensus_core(channel, params, profile, ids, x, D, budget_mult)
        outputs = out["outputs"]
        agreed = out["completed"] and bool(np.all(outputs == outputs[0]))
        agreed_all &= agreed
        holders = np.flatnonzero(ids == outputs[0]) if agreed else np.array([], dtype=int)
        if agreed and holders.size == 1:
            leader, ok = int(holders[0]), True
            break
        if holders.size > 1:
            collisions += 1
    unique_first = ok and attempts == 1
    inv = {"agreement": agreed_all, "unique-decoding": True}
    summary = RunSummary("leader-election", channel.round if ok else None, np.zeros(n, dtype=np.int64),
                         ok, inv, seed, profile.mode, 0, 0, trace.digest() if trace else "",
                         {"leader": leader, "attempts": attempts, "collisions": collisions,
                          "unique_first_attempt": unique_first,
                          "min_id_collision": bool(first_ids is not None
                                                   and (first_ids == first_ids.min()).sum() > 1)})
    return summary, trace


__all__ = [
    "ProtocolMessage", "WakeSchedule", "RunSummary", "transmit_probability", "transmit_rounds",
    "phase_length", "nos_broadcast_bound", "s_broadcast_bound", "run_nos_broadcast",
    "run_s_broadcast", "run_wakeup_adhoc", "run_wakeup_colored", "colored_execution_length",
    "bit_length", "run_consensus", "run_leader_election",
]
