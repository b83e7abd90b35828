"""Round traces: recording, canonical hashing, CSV export and replay."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .sinr import SinrEngine

# canonical ordering of event kinds within a round
EVENT_KINDS = ("phase-boundary", "wake", "transmit", "receive", "inform", "quit-color")
_KIND_RANK = {k: i for i, k in enumerate(EVENT_KINDS)}


@dataclass
class TraceEvent:
    round: int
    station: int
    event: str
    detail1: float | int | str = ""
    detail2: float | int | str = ""


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class Trace:
    """Transmit/receive events are kept as arrays; everything else as rows."""

    _tx: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    _rx: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    events: list[TraceEvent] = field(default_factory=list)
    last_round: int = -1

    def record_window(self, start: int, tx: np.ndarray, senders: np.ndarray) -> None:
        r, s = np.nonzero(tx)
        if r.size:
            self._tx.append((r + start, s))
        r, u = np.nonzero(senders >= 0)
        if r.size:
            self._rx.append((r + start, u, senders[r, u]))
        self.last_round = max(self.last_round, start + len(tx) - 1)

    def add(self, round_index: int, station: int, event: str, detail1="", detail2="") -> None:
        if event not in _KIND_RANK:
            raise ValueError(f"unknown trace event {event!r}")
        self.events.append(TraceEvent(int(round_index), int(station), event, detail1, detail2))

    def transmissions(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._tx:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        return tuple(np.concatenate(parts) for parts in zip(*self._tx))

    def receptions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._rx:
            e = np.empty(0, np.int64)
            return e, e, e
        return tuple(np.concatenate(parts) for parts in zip(*self._rx))

    @property
    def transmit_count(self) -> int:
        return sum(len(r) for r, _ in self._tx)

    def rows(self):
        """All events in canonical order: round, kind, station."""
        out = []
        r, s = self.transmissions()
        out.extend((int(a), _KIND_RANK["transmit"], int(b), "", "") for a, b in zip(r, s))
        r, u, snd = self.receptions()
        out.extend((int(a), _KIND_RANK["receive"], int(b), int(c), "") for a, b, c in zip(r, u, snd))
        out.extend((e.round, _KIND_RANK[e.event], e.station, e.detail1, e.detail2) for e in self.events)
        out.sort(key=lambda row: (row[0], row[1], row[2]))
        for rnd, kind, st, d1, d2 in out:
            yield rnd, st, EVENT_KINDS[kind], d1, d2

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "station", "event", "detail1", "detail2"])
        for rnd, st, ev, d1, d2 in self.rows():
            w.writerow([rnd, st, ev, _fmt(d1), _fmt(d2)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def digest(self) -> str:
        """64-bit BLAKE2b digest of the canonical serialization, as hex."""
        h = hashlib.blake2b(digest_size=8)
        for rnd, st, ev, d1, d2 in self.rows():
            h.update(f"{rnd},{st},{ev},{_fmt(d1)},{_fmt(d2)}\n".encode())
        return h.hexdigest()

    def replay(self, engine: SinrEngine, chunk: int | None = None, tie_tolerance: float = 1e-9) -> int:
        """Re-resolve every recorded transmit set and compare against the
        recorded receptions.  Returns the number of rounds checked.

        Each round goes back through the engine, which must reproduce the
        record exactly.  A second decoder applies the strongest-signal rule
        straight from the station positions; it must agree too, except at
        receivers whose SINR lies within ``tie_tolerance`` of beta, where
        summation order alone can flip the outcome.
        """
        tr, ts = self.transmissions()
        rr, ru, rs = self.receptions()
        if tr.size == 0:
            if rr.size:
                raise InvariantViolation("trace-replay", int(rr.min()), "reception recorded in a silent round")
            return 0
        p = engine.params
        d = engine.topology.distances()
        with np.errstate(divide="ignore"):
            gain = np.where(d > 0, p.power * np.power(d, -p.alpha, where=d > 0, out=np.zeros_like(d)), 0.0)
        rounds, inverse = np.unique(tr, return_inverse=True)
        chunk = chunk or max(1, 4_000_000 // max(engine.n, 1) ** 2)
        # recorded receptions as a (round, receiver) -> sender matrix
        pos = np.searchsorted(rounds, rr)
        silent = (pos >= rounds.size) | (rounds[np.minimum(pos, rounds.size - 1)] != rr)
        if silent.any():
            raise InvariantViolation("trace-replay", int(rr[silent].min()), "reception recorded in a silent round")
        recorded = np.full((rounds.size, engine.n), -1, dtype=np.int64)
        if np.unique(pos * engine.n + ru).size != rr.size:
            raise InvariantViolation("trace-replay", None, "a receiver decoded twice in one round")
        recorded[pos, ru] = rs
        for lo in range(0, rounds.size, chunk):
            sel = (inverse >= lo) & (inverse < lo + chunk)
            tx = np.zeros((min(chunk, rounds.size - lo), engine.n), dtype=bool)
            tx[inverse[sel] - lo, ts[sel]] = True
            senders = engine.resolve_mask(tx)
            power = np.where(tx[:, :, None], gain[None, :, :], 0.0)     # (R, v, u)
            best = power.argmax(axis=1)                                 # strongest sender per receiver
            strongest = np.take_along_axis(power, best[:, None, :], axis=1)[:, 0, :]
            rest = p.noise + power.sum(axis=1) - strongest
            ratio = strongest / (p.beta * rest)
            direct = np.where((strongest > 0) & ~tx & (ratio >= 1.0), best, -1)
            rec = recorded[lo:lo + len(tx)]
            for label, bad in (("engine", senders != rec),
                               ("direct decoder", (direct != senders) & (np.abs(ratio - 1.0) > tie_tolerance))):
                if bad.any():
                    a, u = np.argwhere(bad)[0]
                    raise InvariantViolation("trace-replay", int(rounds[lo + a]),
                                             f"receiver {u}: recorded {rec[a, u]}, engine {senders[a, u]}, "
                                             f"{label} disagrees")
        return int(rounds.size)
