"""Distributed probability coloring (StabilizeProbability).

Each participating station starts with transmission probability
``p_start = C1/(2n)`` and doubles it after every outer iteration until it
reaches ``p_max``.  An outer iteration repeats ``c'`` times a DensityTest
window (transmit with ``p``) followed by a Playoff window (transmit with
``p * c_eps``).  A station whose counts of successful rounds clear both
thresholds in the same inner iteration quits with color ``p``; stations still
running after the last iteration quit with color ``2 * p_max``.

All stations follow one global lockstep schedule, so a coloring always takes
exactly ``schedule_length(...).total`` rounds.
"""

from __future__ import annotations

import configparser
import dataclasses
import functools
import io
import math
from importlib import resources
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .channel import Channel
from .errors import DivergentSeriesError, InvalidInputError, ProtocolOrderError
from .geometry import NetworkTopology, covering_bound
from .sinr import SinrParams

SERIES_TERMS = 10**6

# constants a tuned profile may override, in derivation order
BASE_FIELDS = ("sigma", "C1", "y", "c_d", "z", "q", "a", "b", "c2", "c3", "c0", "c1",
               "c_eps", "C2", "c_prime", "c_bc", "a_tx", "c_hat", "a_sb")
INT_FIELDS = {"y", "z", "a", "b", "c_prime"}


def log_n(n: int) -> float:
    """log2 of the network size, floored at 1 so single-station runs keep
    nonempty windows."""
    return math.log2(max(int(n), 2))


@functools.lru_cache(maxsize=64)
def growth_series(alpha: float, gamma: float, terms: int = SERIES_TERMS) -> float:
    """sum_{i>=1} i^(gamma-alpha-1), partial sum plus Euler-Maclaurin tail."""
    s = alpha - gamma + 1.0
    if s <= 1.0:
        raise DivergentSeriesError(f"alpha={alpha} must exceed gamma={gamma}")
    i = np.arange(terms, 0, -1, dtype=float)  # small terms first
    head = float(np.sum(i**-s))
    m = float(terms)
    tail = m ** (1 - s) / (s - 1) - 0.5 * m**-s + s * m ** (-s - 1) / 12.0
    return head + tail


@dataclass
class ConstantProfile:
    n: int
    epsilon: float
    gamma: float
    sigma: float
    C1: float
    y: int
    c_d: float
    z: int
    q: float
    a: int
    b: int
    c2: float
    c3: float
    c0: float
    c1: float
    c_eps: float
    C2: float
    c_prime: int
    c_bc: float
    a_tx: float
    c_hat: float
    a_sb: float
    p_start: float
    p_max: float
    mode: str = "theory"
    overrides: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def lemma2_threshold(self) -> float:
        """Same-color mass every eps/2-ball must reach.  Stations that never
        quit end with color 2*p_max, so p_max is what the schedule itself
        guarantees for an isolated station."""
        return self.p_max

    @property
    def lemma1_threshold(self) -> float:
        return self.C1

    def for_network(self, n: int) -> "ConstantProfile":
        return dataclasses.replace(self, n=int(n), p_start=self.C1 / (2 * int(n)))

    def rederive(self, params: SinrParams) -> "ConstantProfile":
        """Same constants recomputed for other physical parameters (used to
        color at a smaller epsilon).  Profiles loaded from a file carry no
        derivation recipe and only have their epsilon replaced."""
        if self.mode == "theory" or self.overrides:
            return derive_constants(params, self.gamma, self.n, self.overrides)
        return dataclasses.replace(self, epsilon=params.epsilon)

    # -- serialization -------------------------------------------------------
    def to_section(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "overrides":
                continue
            v = getattr(self, f.name)
            out[f.name] = repr(float(v)) if isinstance(v, float) else str(v)
        return out

    @classmethod
    def from_section(cls, section: Mapping[str, str]) -> "ConstantProfile":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name == "overrides":
                continue
            if f.name not in section:
                raise InvalidInputError(f"[constants] is missing {f.name}")
            raw = section[f.name]
            if f.name == "mode":
                kwargs[f.name] = raw
            elif f.name in INT_FIELDS or f.name == "n":
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        return cls(**kwargs)

    def dumps(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["constants"] = self.to_section()
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def derive_constants(params: SinrParams, gamma: float, n: int,
                     overrides: Mapping[str, float] | None = None) -> ConstantProfile:
    """Compute every algorithm constant from the physical parameters.

    With ``overrides`` the value replaces the derived one at its place in the
    derivation order, so later constants are computed from it.
    """
    if params.alpha <= gamma:
        raise DivergentSeriesError(f"alpha={params.alpha} must exceed gamma={gamma}")
    if n < 1:
        raise InvalidInputError("n must be positive")
    ov = dict(overrides or {})
    unknown = set(ov) - set(BASE_FIELDS)
    if unknown:
        raise InvalidInputError(f"unknown constant override(s): {sorted(unknown)}")
    alpha, beta, eps = params.alpha, params.beta, params.epsilon
    v: dict[str, float] = {}

    def put(name, value):
        v[name] = ov.get(name, value)
        if name in INT_FIELDS:
            v[name] = int(v[name])
        return v[name]

    sigma = put("sigma", growth_series(alpha, gamma))
    C1 = put("C1", alpha / (6.0 * beta * 1.5**alpha * sigma))
    y = put("y", covering_bound(1.0, 1.0 / 6.0, gamma))
    c_d = put("c_d", 1.0 / (32.0 * y))
    z = put("z", 6)
    q = put("q", 1.0 / (z**gamma * 2.0 ** (alpha + 4) * beta * sigma))
    a = put("a", 2)
    b = 1
    while b**gamma * z**gamma * q < C1:
        b += 1
    b = put("b", b)
    # 2 c3 / c2 = q/8 * (1/4)^(a^g z^g q), with c3 = 1
    c3 = put("c3", 1.0)
    c2 = put("c2", 2.0 * c3 / (q / 8.0 * 0.25 ** (a**gamma * z**gamma * q)))
    # c1 / c0 = C1 / (16 y), with c1 = 1
    c1 = put("c1", 1.0)
    put("c0", c1 * 16.0 * y / C1)
    c_eps = put("c_eps", 8.0 * math.log(4.0 * c2 / c3) / (eps**alpha * C1 * c_d))
    C2 = put("C2", min(c3 / (8.0 * c2), C1 * c_d / 2.0) / c_eps)
    put("c_prime", math.ceil(covering_bound(4.0 / 3.0, 1.0, gamma) * C1 * c_eps / q))
    # second-part transmissions: keep the expected number of transmitters in
    # B(v,2) below 1/4 summed over colors
    c_bc = put("c_bc", 4.0 * covering_bound(2.0, 1.0, gamma) * C1 / eps)
    # one-round progress probability p = C2 / (4 c eps log n) = c_hat / log n
    c_hat = put("c_hat", C2 / (4.0 * c_bc * eps))
    # T = a ln n / p rounds with a = 4
    put("a_tx", 4.0 * math.log(2.0) / c_hat)
    # t = (2D + 2 log n) / p  ->  (2 / c_hat) (D log n + log^2 n)
    put("a_sb", 2.0 / c_hat)

    mode = "tuned" if ov else "theory"
    return ConstantProfile(n=int(n), epsilon=eps, gamma=float(gamma), p_start=v["C1"] / (2 * int(n)),
                           p_max=v["C2"] / v["c_eps"], mode=mode, overrides=ov,
                           **{k: v[k] for k in BASE_FIELDS})


def load_overrides(path=None) -> dict[str, float]:
    """Read the ``[overrides]`` section of a profile file; without a path the
    calibrated profile shipped with the package is used."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if path is None:
        cp.read_string(resources.files("sinrcast").joinpath("data/tuned.cfg").read_text())
    else:
        with open(path) as fh:
            cp.read_file(fh)
    if not cp.has_section("overrides"):
        raise InvalidInputError("profile file has no [overrides] section")
    return {k: float(v) for k, v in cp["overrides"].items()}


def make_profile(kind: str, params: SinrParams, gamma: float, n: int, path=None) -> ConstantProfile:
    """``theory``, ``tuned`` (shipped overrides) or ``file``.  A file may hold
    a full profile or only overrides."""
    if kind == "theory":
        return derive_constants(params, gamma, n)
    if kind == "tuned":
        return derive_constants(params, gamma, n, load_overrides())
    if kind == "file":
        if path is None:
            raise InvalidInputError("profile kind 'file' needs a path")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        with open(path) as fh:
            cp.read_file(fh)
        if cp.has_section("constants"):
            return ConstantProfile.from_section(cp["constants"]).for_network(n)
        return derive_constants(params, gamma, n, load_overrides(path))
    raise InvalidInputError(f"unknown profile kind {kind!r}")


class Schedule(NamedTuple):
    density_rounds: int
    playoff_rounds: int
    iteration_rounds: int
    total: int
    iterations: int
    c_prime: int
    density_threshold: int
    playoff_threshold: int


def ladder_length(p_start: float, p_max: float) -> int:
    """Number of doublings taken by ``while p < p_max: p *= 2``."""
    k, p = 0, p_start
    while p < p_max:
        p *= 2.0
        k += 1
    return k


def schedule_length(profile: ConstantProfile, n: int | None = None) -> Schedule:
    n = profile.n if n is None else n
    lg = log_n(n)
    l_dt = math.ceil(profile.c0 * lg)
    l_po = math.ceil(profile.c2 * lg)
    per_iter = profile.c_prime * (l_dt + l_po)
    p_start = profile.C1 / (2 * n)
    k = ladder_length(p_start, profile.p_max)
    return Schedule(l_dt, l_po, per_iter, k * per_iter, k, profile.c_prime,
                    math.ceil(profile.c1 * lg), math.ceil(profile.c3 * lg))


def legal_colors(profile: ConstantProfile, n: int | None = None) -> set[float]:
    n = profile.n if n is None else n
    k = schedule_length(profile, n).iterations
    p = profile.C1 / (2 * n)
    colors = {2.0 * profile.p_max}
    for _ in range(k):
        colors.add(p)
        p *= 2.0
    return colors


# ---------------------------------------------------------------------------
# single-station automaton

DENSITY, PLAYOFF = "density", "playoff"


@dataclass
class ColoringState:
    """One station's view of StabilizeProbability, advanced a round at a time."""

    p: float
    schedule: Schedule
    c_eps: float
    p_max: float
    status: str = "running"
    color: float | None = None
    success_count: int = 0
    iteration: int = 0
    inner: int = 0
    subphase: str = DENSITY
    round_in_subphase: int = 0
    density_passed: bool = False
    quit_iteration: int | None = None

    @classmethod
    def start(cls, profile: ConstantProfile, n: int | None = None, p: float | None = None) -> "ColoringState":
        sched = schedule_length(profile, n)
        n = profile.n if n is None else n
        st = cls(p=profile.C1 / (2 * n) if p is None else p, schedule=sched,
                 c_eps=profile.c_eps, p_max=profile.p_max)
        if sched.iterations == 0:
            st._quit(2.0 * st.p_max)
        return st

    @property
    def running(self) -> bool:
        return self.status == "running"

    @property
    def transmit_probability(self) -> float:
        if not self.running:
            return 0.0
        if self.subphase == DENSITY:
            return min(1.0, self.p)
        return min(1.0, self.p * self.c_eps)

    def _quit(self, color: float) -> None:
        self.status = "quit"
        self.color = color
        self.quit_iteration = self.iteration

    def step(self, sent: bool, received: bool) -> float:
        """Account for the round just resolved; return next round's
        transmission probability."""
        if not self.running:
            raise ProtocolOrderError("station already quit StabilizeProbability")
        sc = self.schedule
        if sent or received:
            self.success_count += 1
        self.round_in_subphase += 1
        if self.subphase == DENSITY:
            if self.round_in_subphase >= sc.density_rounds:
                self.density_passed = self.success_count >= sc.density_threshold
                self.subphase, self.round_in_subphase, self.success_count = PLAYOFF, 0, 0
            return self.transmit_probability
        if self.round_in_subphase < sc.playoff_rounds:
            return self.transmit_probability
        playoff_passed = self.success_count >= sc.playoff_threshold
        both = self.density_passed and playoff_passed
        self.subphase, self.round_in_subphase, self.success_count = DENSITY, 0, 0
        self.density_passed = False
        if both:
            self._quit(self.p)
            return 0.0
        self.inner += 1
        if self.inner == sc.c_prime:
            self.inner = 0
            self.iteration += 1
            self.p *= 2.0
            if self.iteration == sc.iterations:
                self._quit(2.0 * self.p_max)
                return 0.0
        return self.transmit_probability


def stabilize_probability_step(state: ColoringState, sent: bool, received: bool) -> float:
    return state.step(sent, received)


# ---------------------------------------------------------------------------
# whole-network run


@dataclass
class ColoringResult:
    colors: np.ndarray        # NaN for non-participants
    quit_iteration: np.ndarray  # -1 for non-participants; K for survivors
    start_round: int
    rounds: int
    first_heard: np.ndarray   # first round a station decoded anything, -1 if never
    ladder: list[float]       # probability used in each outer iteration
    first_sender: np.ndarray = None  # who sent that first decoded hello

    def as_dict(self) -> dict[int, float]:
        return {i: float(c) for i, c in enumerate(self.colors) if not np.isnan(c)}


def stabilize_probability(channel: Channel, participants: np.ndarray, profile: ConstantProfile,
                          n: int | None = None, *, initial_p: np.ndarray | None = None,
                          trace_quits: bool = True) -> ColoringResult:
    """Run one lockstep execution on the given participant mask.

    Non-participants stay silent but still receive; their first reception
    round is reported so callers can treat hello messages as carriers.
    """
    n = channel.n if n is None else n
    sched = schedule_length(profile, n)
    part = np.asarray(participants, dtype=bool).copy()
    size = channel.n
    p = np.full(size, profile.C1 / (2 * n)) if initial_p is None else np.asarray(initial_p, float).copy()
    running = part.copy()
    colors = np.full(size, np.nan)
    quit_iter = np.where(part, sched.iterations, -1)
    first_heard = np.full(size, -1, dtype=np.int64)
    first_sender = np.full(size, -1, dtype=np.int64)
    start = channel.round
    trace = channel.trace if trace_quits else None
    ladder = []

    for k in range(sched.iterations):
        ladder.append(float(p[part].max()) if part.any() else float("nan"))
        for _ in range(sched.c_prime):
            if not running.any():
                channel.idle(sched.density_rounds + sched.playoff_rounds)
                continue
            w = channel.run(np.where(running, np.minimum(p, 1.0), 0.0), sched.density_rounds)
            _note_heard(first_heard, first_sender, w)
            dt_pass = w.successes() >= sched.density_threshold
            w = channel.run(np.where(running, np.minimum(p * profile.c_eps, 1.0), 0.0),
                            sched.playoff_rounds)
            _note_heard(first_heard, first_sender, w)
            po_pass = w.successes() >= sched.playoff_threshold
            quitting = running & dt_pass & po_pass
            if quitting.any():
                colors[quitting] = p[quitting]
                quit_iter[quitting] = k
                running &= ~quitting
                if trace is not None:
                    for s in np.flatnonzero(quitting):
                        trace.add(channel.round - 1, s, "quit-color", float(p[s]), k)
        p = np.where(running, p * 2.0, p)

    if running.any():
        colors[running] = 2.0 * profile.p_max
        if trace is not None:
            for s in np.flatnonzero(running):
                trace.add(max(channel.round - 1, start), s, "quit-color",
                          2.0 * profile.p_max, sched.iterations)
    return ColoringResult(colors, quit_iter, start, channel.round - start, first_heard, ladder,
                          first_sender)


def _note_heard(first_heard: np.ndarray, first_sender: np.ndarray, w) -> None:
    heard = w.senders >= 0
    new = heard.any(axis=0) & (first_heard < 0)
    if new.any():
        rows = np.argmax(heard[:, new], axis=0)
        first_heard[new] = w.start + rows
        first_sender[new] = w.senders[rows, np.flatnonzero(new)]


# ---------------------------------------------------------------------------
# verifiers


@dataclass
class Lemma1Report:
    passed: bool
    worst_color: float | None
    worst_center: int | None
    worst_sum: float

    def __iter__(self):
        yield self.passed
        yield (self.worst_color, self.worst_center, self.worst_sum)


@dataclass
class Lemma2Report:
    passed: bool
    worst_station: int | None
    worst_mass: float

    def __iter__(self):
        yield self.passed
        yield self.worst_station


def _color_array(coloring, n: int) -> np.ndarray:
    if isinstance(coloring, Mapping):
        arr = np.full(n, np.nan)
        for k, c in coloring.items():
            arr[int(k)] = c
        return arr
    arr = np.asarray(coloring, dtype=float)
    if arr.shape != (n,):
        raise InvalidInputError("coloring must have one entry per station")
    return arr


def _same_color_mass(colors: np.ndarray, within: np.ndarray):
    """For each distinct color, the mass of that color inside every ball.
    Returns (palette, masses[color, center])."""
    present = ~np.isnan(colors)
    palette = np.unique(colors[present])
    if palette.size == 0:
        return palette, np.zeros((0, len(colors)))
    onehot = (colors[None, :] == palette[:, None]) * palette[:, None]   # (C, n)
    return palette, onehot @ within.T.astype(float)


def verify_lemma1(coloring, topology: NetworkTopology, C1: float, radius: float = 1.0) -> Lemma1Report:
    """Every station-centered ball of ``radius`` carries less than ``C1`` of
    every single color."""
    colors = _color_array(coloring, topology.n)
    within = topology.distances() <= radius
    palette, mass = _same_color_mass(colors, within)
    if palette.size == 0:
        return Lemma1Report(True, None, None, 0.0)
    ci, center = np.unravel_index(np.argmax(mass), mass.shape)
    worst = float(mass[ci, center])
    return Lemma1Report(worst < C1, float(palette[ci]), int(center), worst)


def verify_lemma1_strict(coloring, topology: NetworkTopology, C1: float) -> Lemma1Report:
    """Radius-2 variant that dominates every unit ball, not only
    station-centered ones."""
    return verify_lemma1(coloring, topology, covering_bound(2.0, 1.0, topology.space.gamma) * C1, radius=2.0)


def verify_lemma2(coloring, topology: NetworkTopology, epsilon: float, threshold: float) -> Lemma2Report:
    """Each colored station sees some color with mass at least ``threshold``
    inside B(v, epsilon/2)."""
    colors = _color_array(coloring, topology.n)
    within = topology.distances() <= epsilon / 2.0
    palette, mass = _same_color_mass(colors, within)
    present = np.flatnonzero(~np.isnan(colors))
    if present.size == 0:
        return Lemma2Report(True, None, math.inf)
    best = mass[:, present].max(axis=0)
    failing = present[best < threshold]
    if failing.size:
        v = int(failing[0])
        return Lemma2Report(False, v, float(best[present.tolist().index(v)]))
    i = int(np.argmin(best))
    return Lemma2Report(True, int(present[i]), float(best[i]))
