"""Round clock shared by all protocols of one trial.

A window is a run of consecutive rounds in which every station transmits with
a fixed probability.  Because coin flips come from a counter-based stream, a
window can be simulated speculatively and only a prefix committed: the
committed rounds are exactly what a round-by-round loop would have produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import CounterStream
from .sinr import SinrEngine
from .trace import Trace


@dataclass
class Window:
    start: int
    tx: np.ndarray        # (L, n) bool
    senders: np.ndarray   # (L, n) int, -1 when nothing decoded

    def __len__(self) -> int:
        return len(self.tx)

    def successes(self) -> np.ndarray:
        """Per-station count of rounds in which it sent or decoded something."""
        return (self.tx | (self.senders >= 0)).sum(axis=0)


class Channel:
    def __init__(self, engine: SinrEngine, seed: int, *, trace: Trace | None = None, start_round: int = 0):
        self.engine = engine
        self.n = engine.n
        self.seed = seed
        self.stream = CounterStream(seed, "tx")
        self.trace = trace
        self.round = start_round
        self.rounds_with_traffic = 0

    def simulate(self, prob: np.ndarray, length: int) -> Window:
        """Draw and resolve ``length`` rounds from the current round without
        advancing the clock."""
        prob = np.asarray(prob, dtype=float)
        if length <= 0:
            empty = np.zeros((0, self.n), dtype=bool)
            return Window(self.round, empty, np.zeros((0, self.n), dtype=np.int64))
        if not prob.any():
            tx = np.zeros((length, self.n), dtype=bool)
        else:
            tx = self.stream.window(self.round, length, self.n) < prob
        senders = self.engine.resolve_mask(tx, first_round=self.round)
        return Window(self.round, tx, senders)

    def commit(self, window: Window, length: int | None = None) -> Window:
        if window.start != self.round:
            raise RuntimeError("window does not start at the current round")
        k = len(window) if length is None else length
        if k < len(window):
            window = Window(window.start, window.tx[:k], window.senders[:k])
        if self.trace is not None and k:
            self.trace.record_window(window.start, window.tx, window.senders)
        self.rounds_with_traffic += int(window.tx.any(axis=1).sum())
        self.round += k
        return window

    def run(self, prob: np.ndarray, length: int) -> Window:
        return self.commit(self.simulate(prob, length))

    def idle(self, length: int) -> None:
        self.round += max(0, int(length))
