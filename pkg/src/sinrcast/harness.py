"""Experiment plumbing: configs, single trials, scaling fits, calibration and
the per-hop progress probe."""

from __future__ import annotations

import configparser
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from .channel import Channel
from .coloring import (
    ConstantProfile,
    derive_constants,
    load_overrides,
    log_n,
    make_profile,
    schedule_length,
    stabilize_probability,
    verify_lemma1,
    verify_lemma2,
)
from .errors import CalibrationFailed, InvalidInputError, InvariantViolation
from .geometry import NetworkTopology, generate_topology, line_for_diameter, read_topology
from .protocols import (
    RunSummary,
    WakeSchedule,
    run_consensus,
    run_leader_election,
    run_nos_broadcast,
    run_s_broadcast,
    run_wakeup_adhoc,
    run_wakeup_colored,
    transmit_probability,
)
from .rng import CounterStream, derive_key
from .sinr import SinrEngine, SinrParams
from .trace import Trace

PROTOCOLS = ("nos-broadcast", "s-broadcast", "wakeup-adhoc", "wakeup-colored", "consensus",
             "leader-election", "coloring")

# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    protocol: str = "s-broadcast"
    family: str = "uniform-square"
    n: int = 100
    topology_params: dict = field(default_factory=dict)
    topology_file: str = ""
    topology_seed: int | None = None   # None: use the trial seed
    alpha: float = 3.0
    beta: float = 1.0
    noise: float = 1.0
    epsilon: float = 0.5
    gamma: float | None = None          # None: taken from the space
    profile: str = "tuned"
    profile_file: str = ""
    source: int = 0
    budget_mult: float = 4.0
    wake: str = "all"                   # "all", "single", or "id:round, id:round, ..."
    schedule_file: str = ""
    x: int = 7
    values: str = "random"             # "random" or comma-separated inputs
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = ""

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvalidInputError(f"unknown protocol {self.protocol!r}")
        if self.profile not in ("theory", "tuned", "file"):
            raise InvalidInputError(f"unknown profile kind {self.profile!r}")

    @property
    def params(self) -> SinrParams:
        return SinrParams(self.alpha, self.beta, self.noise, None, self.epsilon)

    # -- serialization -------------------------------------------------------
    def dumps(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["topology"] = {
            "family": self.family, "n": str(self.n), "file": self.topology_file,
            "seed": "" if self.topology_seed is None else str(self.topology_seed),
            **{f"param.{k}": repr(float(v)) for k, v in sorted(self.topology_params.items())},
        }
        cp["sinr"] = {"alpha": repr(self.alpha), "beta": repr(self.beta), "noise": repr(self.noise),
                      "epsilon": repr(self.epsilon),
                      "gamma": "" if self.gamma is None else repr(self.gamma)}
        cp["profile"] = {"kind": self.profile, "file": self.profile_file}
        cp["protocol"] = {"name": self.protocol, "source": str(self.source),
                          "budget_mult": repr(self.budget_mult), "wake": self.wake,
                          "schedule_file": self.schedule_file, "x": str(self.x), "values": self.values}
        cp["run"] = {"seeds": ", ".join(str(s) for s in self.seeds), "out_dir": self.out_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise InvalidInputError(f"cannot parse config: {e}") from None
        kw: dict = {}
        get = lambda sec, key: cp.get(sec, key, fallback=None)  # noqa: E731
        if cp.has_section("topology"):
            t = cp["topology"]
            kw.update(family=t.get("family", "uniform-square"), n=int(t.get("n", 100)),
                      topology_file=t.get("file", ""))
            if t.get("seed", ""):
                kw["topology_seed"] = int(t["seed"])
            kw["topology_params"] = {k[6:]: float(v) for k, v in t.items() if k.startswith("param.")}
        if cp.has_section("sinr"):
            for k in ("alpha", "beta", "noise", "epsilon"):
                if get("sinr", k):
                    kw[k] = float(get("sinr", k))
            if get("sinr", "gamma"):
                kw["gamma"] = float(get("sinr", "gamma"))
        if cp.has_section("profile"):
            kw["profile"] = cp["profile"].get("kind", "tuned")
            kw["profile_file"] = cp["profile"].get("file", "")
        if cp.has_section("protocol"):
            p = cp["protocol"]
            kw.update(protocol=p.get("name", "s-broadcast"), source=int(p.get("source", 0)),
                      budget_mult=float(p.get("budget_mult", 4.0)), wake=p.get("wake", "all"),
                      schedule_file=p.get("schedule_file", ""), x=int(p.get("x", 7)),
                      values=p.get("values", "random"))
        if cp.has_section("run"):
            seeds = cp["run"].get("seeds", "0")
            kw["seeds"] = [int(s) for s in seeds.replace(",", " ").split()]
            kw["out_dir"] = cp["run"].get("out_dir", "")
        return cls(**kw)

    @classmethod
    def read(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.loads(fh.read())

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())


# ---------------------------------------------------------------------------
# trials


def build_topology(config: ExperimentConfig, seed: int) -> NetworkTopology:
    if config.topology_file:
        return read_topology(config.topology_file)
    tseed = seed if config.topology_seed is None else config.topology_seed
    params = dict(config.topology_params)
    params.setdefault("epsilon", config.epsilon)
    if config.family == "line-diameter":
        if "diameter" not in params:
            raise InvalidInputError("family line-diameter needs a 'diameter' topology parameter")
        return line_for_diameter(config.n, int(params["diameter"]), config.epsilon)
    return generate_topology(config.family, config.n, params, seed=tseed)


def build_profile(config: ExperimentConfig, topology: NetworkTopology) -> ConstantProfile:
    gamma = topology.space.gamma if config.gamma is None else config.gamma
    return make_profile(config.profile, config.params, gamma, topology.n,
                        config.profile_file or None)


def _wake_schedule(config: ExperimentConfig, n: int) -> WakeSchedule:
    if config.schedule_file:
        return WakeSchedule.read(config.schedule_file)
    if config.wake == "all":
        return WakeSchedule.simultaneous(range(n))
    if config.wake == "single":
        return WakeSchedule({config.source: 0})
    wake = {}
    for item in config.wake.split(","):
        s, r = item.split(":")
        wake[int(s)] = math.inf if r.strip() == "inf" else int(r)
    return WakeSchedule(wake)


def _consensus_inputs(config: ExperimentConfig, n: int, seed: int) -> np.ndarray:
    if config.values == "random":
        return CounterStream(seed, "inputs").integers(0, np.arange(n), config.x + 1)
    vals = np.array([int(v) for v in config.values.split(",")], dtype=np.int64)
    if vals.size != n:
        raise InvalidInputError("need one input value per station")
    return vals


def base_coloring(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                  seed: int) -> np.ndarray:
    """All-station coloring drawn from its own random stream."""
    ch = Channel(SinrEngine(topology, params), derive_key(seed, "base-coloring"))
    prof = profile.rederive(params.with_epsilon(params.epsilon / 3)).for_network(topology.n)
    return stabilize_probability(ch, np.ones(topology.n, dtype=bool), prof, topology.n,
                                 trace_quits=False).colors


def run_coloring(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                 seed: int, record: bool = True):
    n = topology.n
    trace = Trace() if record else None
    ch = Channel(SinrEngine(topology, params), seed, trace=trace)
    profile = profile.for_network(n)
    res = stabilize_probability(ch, np.ones(n, dtype=bool), profile, n)
    l1 = verify_lemma1(res.colors, topology, profile.lemma1_threshold)
    l2 = verify_lemma2(res.colors, topology, params.epsilon, profile.lemma2_threshold)
    inv = {"lemma1": l1.passed, "lemma2": l2.passed}
    summary = RunSummary("coloring", res.rounds, np.zeros(n, dtype=np.int64), l1.passed and l2.passed,
                         inv, seed, profile.mode, res.rounds, schedule_length(profile, n).total,
                         trace.digest() if trace else "",
                         {"lemma1_worst": l1.worst_sum, "lemma2_worst": l2.worst_mass,
                          "colors": res.colors.tolist()})
    return summary, trace


def run_trial(config: ExperimentConfig, seed: int, *, record: bool = True):
    """Run one trial and check every runtime invariant.  Raises
    ``InvariantViolation`` naming the first violated invariant."""
    topo = build_topology(config, seed)
    params = config.params
    profile = build_profile(config, topo)
    name = config.protocol
    if name == "nos-broadcast":
        summary, trace = run_nos_broadcast(topo, params, profile, config.source, seed,
                                           budget_mult=config.budget_mult, record=record)
    elif name == "s-broadcast":
        summary, trace = run_s_broadcast(topo, params, profile, config.source, seed,
                                         budget_mult=config.budget_mult, record=record)
    elif name == "wakeup-adhoc":
        summary, trace = run_wakeup_adhoc(topo, params, profile, _wake_schedule(config, topo.n), seed,
                                          budget_mult=config.budget_mult, record=record)
    elif name == "wakeup-colored":
        base = base_coloring(topo, params, profile, seed)
        summary, trace = run_wakeup_colored(topo, params, profile, base, _wake_schedule(config, topo.n),
                                            seed, budget_mult=config.budget_mult, record=record)
    elif name == "consensus":
        summary, trace = run_consensus(topo, params, profile, _consensus_inputs(config, topo.n, seed),
                                       seed, x=config.x, budget_mult=config.budget_mult, record=record)
    elif name == "leader-election":
        summary, trace = run_leader_election(topo, params, profile, seed,
                                             budget_mult=config.budget_mult, record=record)
    else:
        summary, trace = run_coloring(topo, params, profile, seed, record=record)
    if trace is not None:
        trace.replay(SinrEngine(topo, params))
        summary.invariants["trace-replay"] = True
    for inv in ("payload-integrity", "monotone-informed", "phase-synchrony", "agreement"):
        if summary.invariants.get(inv) is False:
            raise InvariantViolation(inv, None, f"{name} run with seed {seed}")
    return summary, trace


# ---------------------------------------------------------------------------
# scaling fits


FORMULAS = {
    "nos": lambda D, n: D * log_n(n) ** 2,
    "sb": lambda D, n: D * log_n(n) + log_n(n) ** 2,
}


@dataclass
class ScalingReport:
    formula: str
    slope: float
    intercept: float
    r2: float
    loo_slopes: list[float]
    groups: list[tuple[int, int, float]]   # (D, n, median rounds)

    @property
    def loo_ratio(self) -> float:
        """max/min of the leave-one-out slopes (1 is perfectly stable)."""
        s = np.asarray(self.loo_slopes + [self.slope])
        if np.any(s <= 0):
            return math.inf
        return float(s.max() / s.min())


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.column_stack([x, np.ones_like(x)])
    (b, a), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a + b * x)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(resid @ resid) / tot if tot > 0 else 1.0
    return float(b), float(a), r2


def fit_scaling(data: Iterable, formula: str = "sb") -> ScalingReport:
    """Least squares of median completion rounds per (D, n) group against
    the bound's shape, with an intercept.  ``data`` holds RunSummary objects
    (diameter in ``extra``) or ``(D, n, rounds)`` tuples."""
    if formula not in FORMULAS:
        raise InvalidInputError(f"unknown formula {formula!r}")
    groups: dict[tuple[int, int], list[float]] = {}
    for item in data:
        if isinstance(item, RunSummary):
            if item.rounds is None:
                continue
            key = (int(item.extra["diameter"]), len(item.first_informed))
            groups.setdefault(key, []).append(item.rounds)
        else:
            D, n, r = item
            groups.setdefault((int(D), int(n)), []).append(float(r))
    if len({D for D, _ in groups}) < 3:
        raise InvalidInputError("scaling fits need at least three distinct diameters")
    keys = sorted(groups)
    x = np.array([FORMULAS[formula](D, n) for D, n in keys], dtype=float)
    y = np.array([float(np.median(groups[k])) for k in keys])
    slope, intercept, r2 = _fit(x, y)
    loo = []
    for i in range(len(keys)):
        keep = np.arange(len(keys)) != i
        loo.append(_fit(x[keep], y[keep])[0])
    return ScalingReport(formula, slope, intercept, r2, loo,
                         [(D, n, float(m)) for (D, n), m in zip(keys, y)])


# ---------------------------------------------------------------------------
# per-hop progress


@dataclass
class HopProgress:
    station: int
    rounds: int
    hits: int
    ci: tuple[float, float]
    p_hat: float

    @property
    def frequency(self) -> float:
        return self.hits / self.rounds if self.rounds else 0.0


def measure_hop_progress(topology: NetworkTopology, params: SinrParams, profile: ConstantProfile,
                         colors: np.ndarray, station: int, seed: int, rounds: int = 10_000,
                         confidence: float = 0.99) -> HopProgress:
    """Frequency of rounds in which exactly one station of B(v, eps/2)
    transmits and every non-transmitting station within 1 - eps/2 of it
    decodes it, with every station relaying at its broadcast probability."""
    n = topology.n
    eps2 = params.epsilon / 2
    probs = transmit_probability(colors, profile, n, params.epsilon)
    engine = SinrEngine(topology, params)
    ch = Channel(engine, derive_key(seed, "hop-probe", station))
    d = topology.distances()
    near = d[station] <= eps2
    reach = d <= 1 - eps2
    np.fill_diagonal(reach, False)
    hits = 0
    for start in range(0, rounds, 1024):
        w = ch.run(probs, min(1024, rounds - start))
        one = w.tx[:, near].sum(axis=1) == 1
        for r in np.flatnonzero(one):
            v = int(np.flatnonzero(w.tx[r] & near)[0])
            targets = reach[v] & ~w.tx[r]
            if np.all(w.senders[r, targets] == v):
                hits += 1
    ci = binomtest(hits, rounds).proportion_ci(confidence_level=confidence)
    return HopProgress(station, rounds, hits, (float(ci.low), float(ci.high)),
                       profile.c_hat / log_n(n))


# ---------------------------------------------------------------------------
# calibration


DEFAULT_GRID = {
    "c_eps": [32.0, 16.0],
    "c3": [5.2, 4.4],
    "c_bc": [0.1, 0.3],
}


@dataclass
class GridPoint:
    overrides: dict
    lemma_rate: float
    broadcast_rate: float
    schedule_rounds: int
    broadcast_median: float

    @property
    def feasible(self) -> bool:
        return self.lemma_rate >= 0.95 and self.broadcast_rate >= 0.95


def _family_topology(family: str, n: int, seed: int, epsilon: float) -> NetworkTopology:
    if family == "uniform-square":
        return generate_topology(family, n, {"side": (n / 25.0) ** 0.5, "epsilon": epsilon}, seed=seed)
    if family == "line-uniform":
        return generate_topology(family, n, {"spacing": 0.05, "epsilon": epsilon}, seed=seed)
    return generate_topology(family, n, {"epsilon": epsilon}, seed=seed)


def evaluate_point(overrides: Mapping[str, float], families: Sequence[str], ns: Sequence[int],
                   seeds: Sequence[int], params: SinrParams | None = None) -> GridPoint:
    params = params or SinrParams()
    lemma_ok = bc_ok = total = 0
    sched = 0
    medians = []
    for fam in families:
        for n in ns:
            rounds = []
            for s in seeds:
                topo = _family_topology(fam, n, s, params.epsilon)
                prof = derive_constants(params, topo.space.gamma, n, overrides)
                summ, _ = run_coloring(topo, params, prof, s, record=False)
                lemma_ok += summ.success
                bsum, _ = run_s_broadcast(topo, params, prof, 0, s, record=False)
                bc_ok += bsum.success
                if bsum.rounds is not None:
                    rounds.append(bsum.rounds)
                total += 1
            sched += schedule_length(prof, n).total
            medians.append(float(np.median(rounds)) if rounds else math.inf)
    return GridPoint(dict(overrides), lemma_ok / total, bc_ok / total, sched, float(np.mean(medians)))


def calibrate_profile(families: Sequence[str] = ("uniform-square",), ns: Sequence[int] = (50, 100, 200),
                      seeds: int | Sequence[int] = 5, grid: Mapping[str, Sequence[float]] | None = None,
                      base: Mapping[str, float] | None = None, params: SinrParams | None = None,
                      log=None) -> tuple[dict, list[GridPoint]]:
    """Grid search over constant overrides.

    Feasible points reach 95% on both the coloring checks and SBroadcast
    completion; among them the shortest total coloring schedule wins, then
    the fastest median broadcast, then grid order.  Returns the winning
    overrides and the search log; raises ``CalibrationFailed`` carrying the
    best near-miss when nothing is feasible.
    """
    params = params or SinrParams()
    grid = DEFAULT_GRID if grid is None else grid
    base = load_overrides() if base is None else dict(base)
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    keys = list(grid)
    points = []
    for vals in itertools.product(*(grid[k] for k in keys)):
        ov = dict(base)
        ov.update(zip(keys, vals))
        pt = evaluate_point(ov, families, ns, seeds, params)
        points.append(pt)
        if log is not None:
            log.write(f"{dict(zip(keys, vals))} lemma={pt.lemma_rate:.3f} broadcast={pt.broadcast_rate:.3f} "
                      f"schedule={pt.schedule_rounds} median={pt.broadcast_median:.1f}\n")
    feasible = [p for p in points if p.feasible]
    if not feasible:
        best = max(points, key=lambda p: min(p.lemma_rate, p.broadcast_rate))
        raise CalibrationFailed(best, points)
    best = min(feasible, key=lambda p: (p.schedule_rounds, p.broadcast_median))
    return best.overrides, points


def write_overrides(overrides: Mapping[str, float], path) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["overrides"] = {k: repr(float(v)) for k, v in overrides.items()}
    with open(path, "w") as fh:
        cp.write(fh)


__all__ = [
    "PROTOCOLS", "ExperimentConfig", "build_topology", "build_profile", "base_coloring",
    "run_coloring", "run_trial", "FORMULAS", "ScalingReport", "fit_scaling", "HopProgress",
    "measure_hop_progress", "DEFAULT_GRID", "GridPoint", "evaluate_point", "calibrate_profile",
    "write_overrides",
]
