"""Acceptance suite: one test per criterion, each printing one PASS/FAIL line.

Every protocol run made here with a recorded trace is replayed through an
independent strongest-signal decoder; the last test checks the collected
replays (or makes its own sample when run alone).
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from oracle import all_subsets, brute_force_receptions
from sinrcast.channel import Channel
from sinrcast.coloring import legal_colors, make_profile, schedule_length, stabilize_probability
from sinrcast.facts import (
    check_reception_facts,
    fact_notransmit_batch,
    fact_sum_batch,
    random_probability_vectors,
)
from sinrcast.geometry import EUCLIDEAN_PLANE, LINE, NetworkTopology, generate_topology, line_for_diameter
from sinrcast.harness import fit_scaling, run_coloring
from sinrcast.protocols import (
    run_consensus,
    run_leader_election,
    run_nos_broadcast,
    run_s_broadcast,
)
from sinrcast.sinr import SinrEngine, SinrParams, resolve_round
from sinrcast.trace import Trace

P = SinrParams()
REPLAYS: list[tuple[str, int, bool]] = []


def report(number, name, ok, detail):
    return f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {name}: {detail}"


@pytest.fixture
def emit(capsys):
    def _emit(number, name, ok, detail):
        with capsys.disabled():
            print("\n" + report(number, name, ok, detail))
        assert ok, detail
    return _emit


def replayed(label, topo, trace):
    """Replay a recorded trace and file the outcome for the last criterion."""
    if trace is None:
        return
    try:
        rounds = trace.replay(SinrEngine(topo, P))
        REPLAYS.append((label, rounds, True))
    except Exception:  # noqa: BLE001 - any failure is a replay failure
        REPLAYS.append((label, 0, False))


def square(n, seed):
    return generate_topology("uniform-square", n, {"side": math.sqrt(n / 25)}, seed=seed)


def tuned(topo):
    return make_profile("tuned", P, topo.space.gamma, topo.n)


# ---------------------------------------------------------------------------


def _pairwise_oracle(pts, subsets_mask):
    """Per-pair SINR with the interference summed explicitly over w != v."""
    n = len(pts)
    d = np.array([[math.dist(a, b) for b in pts] for a in pts])
    with np.errstate(divide="ignore"):
        g = np.where(d > 0, P.power * d ** -P.alpha, 0.0)
    excl = 1.0 - np.eye(n)
    T = subsets_mask.astype(float)
    interference = np.einsum("sw,wv,wu->svu", T, excl, g)
    sinr = g[None, :, :] / (P.noise + interference)
    ok = (sinr >= P.beta) & subsets_mask[:, :, None] & ~subsets_mask[:, None, :]
    ok &= ~np.eye(n, dtype=bool)[None]
    assert ok.sum(axis=1).max(initial=0) <= 1
    return np.where(ok.any(axis=1), ok.argmax(axis=1), -1)


def test_c01_sinr_oracle_equivalence(emit):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    mismatches = topologies = sets = 0
    for k in range(200):
        n = 12 if k % 4 == 0 else int(rng.integers(1, 13))
        side = rng.uniform(0.3, 3.0)
        pts = rng.uniform(0, side, size=(n, 2))
        topo = NetworkTopology.from_positions(pts, EUCLIDEAN_PLANE, 0.5)
        engine = SinrEngine(topo, P)
        subsets = list(all_subsets(n))
        mask = np.zeros((len(subsets), n), dtype=bool)
        for i, T in enumerate(subsets):
            mask[i, list(T)] = True
        got = engine.resolve_mask(mask)
        want = _pairwise_oracle(pts.tolist(), mask)
        mismatches += int(np.any(got != want, axis=1).sum())
        # the public per-round call, against the pure-Python evaluator
        for i in rng.choice(len(subsets), size=min(24, len(subsets)), replace=False):
            T = set(subsets[i])
            out = resolve_round(T, None, P, topo, engine=engine)
            pure = brute_force_receptions(pts.tolist(), T)
            mismatches += {u: s for u, (s, _) in out.received.items()} != pure
        topologies += 1
        sets += len(subsets)
    elapsed = time.time() - t0
    emit(1, "SINR oracle equivalence", mismatches == 0 and elapsed < 60,
         f"{topologies} topologies, {sets} transmit sets, {mismatches} mismatches, {elapsed:.1f}s")


def test_c02_probability_facts(emit):
    t0 = time.time()
    rng = np.random.default_rng(7)
    _, ok_sum = fact_sum_batch(random_probability_vectors(rng, 100_000))
    _, ok_none = fact_notransmit_batch(random_probability_vectors(rng, 100_000, total=6.0, cap=0.5))
    bad = int((~ok_sum).sum() + (~ok_none).sum())
    elapsed = time.time() - t0
    emit(2, "exactly-one and no-transmission bounds", bad == 0 and elapsed < 10,
         f"2 x 100000 vectors, {bad} violations, {elapsed:.1f}s")


def test_c03_reception_facts(emit):
    t0 = time.time()
    rng = np.random.default_rng(11)
    reports = {k: None for k in ("close-interference", "far-reception", "on-behalf")}
    instances = {k: 0 for k in reports}
    counter = {k: 0 for k in reports}
    # draw until every fact has 10^4 hypothesis-satisfying instances
    while min(instances.values()) < 10_000:
        need = 10_000 - min(instances.values())
        for name, rep in check_reception_facts(rng, max(need, 500)).items():
            if instances[name] < 10_000:
                instances[name] += rep.instances
                counter[name] += rep.counterexamples
    elapsed = time.time() - t0
    total_bad = sum(counter.values())
    emit(3, "reception facts", total_bad == 0 and elapsed < 60,
         ", ".join(f"{k} {instances[k]} instances/{counter[k]} counterexamples" for k in reports)
         + f", {elapsed:.1f}s")


def test_c04_theory_structure(emit):
    problems = []
    runs = 0
    for n in range(1, 9):
        for seed in range(4):
            topo = (generate_topology("line-uniform", n, {"spacing": 0.3}) if seed % 2
                    else generate_topology("grid", n, {"spacing": 0.4}))
            prof = make_profile("theory", P, topo.space.gamma, n)
            sched = schedule_length(prof, n)
            legal = legal_colors(prof, n)
            hashes = set()
            for _ in range(5):
                trace = Trace()
                ch = Channel(SinrEngine(topo, P), seed, trace=trace)
                res = stabilize_probability(ch, np.ones(n, bool), prof, n)
                hashes.add(trace.digest())
                runs += 1
            replayed(f"theory-coloring n={n}", topo, trace)
            ladder_ok = all(math.isclose(p, prof.p_start * 2**i) for i, p in enumerate(res.ladder))
            if not ladder_ok:
                problems.append(f"ladder n={n}")
            if not set(res.colors.tolist()) <= legal:
                problems.append(f"illegal color n={n}")
            if res.rounds != sched.total or ch.round != sched.total:
                problems.append(f"schedule length n={n}")
            if len(hashes) != 1:
                problems.append(f"nondeterministic n={n}")
    k = schedule_length(make_profile("theory", P, 2.0, 8), 8).iterations
    emit(4, "theory-profile coloring structure", not problems,
         f"{runs} runs n<=8, ladder iterations K={k}, problems: {problems or 'none'}")


def test_c05_tuned_lemmas(emit):
    t0 = time.time()
    layouts = {"uniform-square": lambda n: {"side": math.sqrt(n / 25)},
               "line-uniform": lambda n: {"spacing": 0.05}}
    worst = 1.0
    cells = []
    for family, params in layouts.items():
        for n in (50, 100, 200, 400):
            good = 0
            for seed in range(20):
                topo = generate_topology(family, n, params(n), seed=seed)
                summ, trace = run_coloring(topo, P, tuned(topo), seed, record=seed == 0)
                replayed(f"coloring {family} n={n}", topo, trace)
                good += summ.invariants["lemma1"] and summ.invariants["lemma2"]
            worst = min(worst, good / 20)
            cells.append(f"{family[:4]}{n}:{good}/20")
    elapsed = time.time() - t0
    emit(5, "tuned-profile coloring properties", worst >= 0.95 and elapsed < 600,
         f"{' '.join(cells)}, {elapsed:.1f}s")


def test_c06_broadcast_completion(emit):
    t0 = time.time()
    topologies = {
        "square-100": lambda s: square(100, s),
        "line-100": lambda s: generate_topology("line-uniform", 100, {"spacing": 0.05}),
    }
    rates = {}
    for name, make in topologies.items():
        for proto, run in (("sb", run_s_broadcast), ("nos", run_nos_broadcast)):
            ok = 0
            for seed in range(100):
                topo = make(seed)
                summ, trace = run(topo, P, tuned(topo), 0, seed, budget_mult=4.0, record=seed < 5)
                replayed(f"{proto} {name}", topo, trace)
                ok += summ.success and summ.rounds <= summ.budget
            rates[f"{proto}/{name}"] = ok / 100
    elapsed = time.time() - t0
    emit(6, "broadcast completion within 4x bound", min(rates.values()) >= 0.95 and elapsed < 900,
         " ".join(f"{k}={v:.2f}" for k, v in rates.items()) + f", {elapsed:.1f}s")


def chained_geometric(clusters, per_cluster):
    """Clusters of geometrically shrinking gaps, 0.45 apart: large diameter
    and large granularity at once."""
    pts = [j * 0.45 + 0.2 * (1 - 2.0**-i) for j in range(clusters) for i in range(per_cluster)]
    return NetworkTopology.from_positions(np.array(pts), LINE, 0.5, family="chained-geometric")


def _sb_median(topo, label, seeds=50):
    rounds = []
    for seed in range(seeds):
        summ, trace = run_s_broadcast(topo, P, tuned(topo), 0, seed, record=seed < 2)
        replayed(label, topo, trace)
        rounds.append(summ.rounds if summ.success else math.inf)
    return float(np.median(rounds))


def test_c07_granularity_independence(emit):
    details = []
    ok = True
    # the footnote layout keeps every station within range 1, so D = 2
    layouts = [(f"geometric n={n}", generate_topology("line-geometric", n)) for n in (8, 16, 32)]
    layouts += [(f"chained {k}x{m}", chained_geometric(k, m)) for k, m in ((4, 8), (8, 16))]
    for label, geo in layouts:
        flat = line_for_diameter(geo.n, geo.diameter)
        med = [_sb_median(geo, f"sb {label}"), _sb_median(flat, f"sb flat {label}")]
        ratio = max(med) / min(med)
        ok &= ratio <= 2.0
        details.append(f"{label} D={geo.diameter} granularity={geo.granularity:.3g} "
                       f"medians {med[0]:g}/{med[1]:g}")
    emit(7, "granularity independence", ok, "; ".join(details))


def test_c08_scaling(emit):
    t0 = time.time()
    runs = {"sb": [], "nos": []}
    for D in (4, 8, 16, 32):
        topo = line_for_diameter(8 * D, D)
        prof = tuned(topo)
        for seed in range(30):
            for key, run in (("sb", run_s_broadcast), ("nos", run_nos_broadcast)):
                summ, trace = run(topo, P, prof, 0, seed, record=seed == 0)
                replayed(f"{key} scaling D={D}", topo, trace)
                runs[key].append(summ)
    sb = fit_scaling(runs["sb"], "sb")
    nos = fit_scaling(runs["nos"], "nos")
    elapsed = time.time() - t0
    emit(8, "scaling regression", sb.loo_ratio <= 2.0 and nos.loo_ratio <= 2.0,
         f"sb slope {sb.slope:.3g} r2 {sb.r2:.3f} loo-ratio {sb.loo_ratio:.2f}; "
         f"nos slope {nos.slope:.3g} r2 {nos.r2:.3f} loo-ratio {nos.loo_ratio:.2f}; {elapsed:.1f}s")


def test_c09_consensus_and_leader(emit):
    t0 = time.time()
    rng = np.random.default_rng(99)
    completed = correct = 0
    for k in range(500):
        x = (1, 7, 255)[k % 3]
        n = int(rng.integers(2, 31))
        topo = square(n, k)
        vals = rng.integers(0, x + 1, size=n)
        summ, trace = run_consensus(topo, P, tuned(topo), vals, k, x=x, record=k < 10)
        replayed(f"consensus x={x}", topo, trace)
        if summ.extra["completed"]:
            completed += 1
            correct += summ.extra["outputs"] == [int(vals.min())] * n
    n = 30
    unique = 0
    trials = 10_000
    for seed in range(trials):
        topo = square(n, seed)
        summ, trace = run_leader_election(topo, P, tuned(topo), seed, record=seed < 10)
        replayed("leader election", topo, trace)
        unique += bool(summ.extra["unique_first_attempt"])
    target = 1 - 3 / (2 * n)
    low = binomtest(unique, trials).proportion_ci(confidence_level=0.99).low
    ok = completed > 0 and correct == completed and low >= target
    emit(9, "consensus and leader election", ok,
         f"consensus {correct}/{completed} correct of 500 runs; leader unique on first attempt "
         f"{unique}/{trials} (99% CI low {low:.4f} vs {target:.4f}), {time.time() - t0:.1f}s")


def test_c10_trace_replay(emit):
    if not REPLAYS:
        for seed in range(3):
            topo = square(60, seed)
            prof = tuned(topo)
            for run in (run_s_broadcast, run_nos_broadcast):
                _, trace = run(topo, P, prof, 0, seed)
                replayed(run.__name__, topo, trace)
            _, trace = run_consensus(topo, P, prof, np.arange(60) % 8, seed, x=7)
            replayed("consensus", topo, trace)
            _, trace = run_leader_election(topo, P, prof, seed)
            replayed("leader election", topo, trace)
            _, trace = run_coloring(topo, P, prof, seed)
            replayed("coloring", topo, trace)
        line = generate_topology("line-uniform", 40, {"spacing": 0.05})
        _, trace = run_s_broadcast(line, P, tuned(line), 0, 1)
        replayed("sb line", line, trace)
    failed = [label for label, _, ok in REPLAYS if not ok]
    rounds = sum(r for _, r, _ in REPLAYS)
    emit(10, "trace replay", not failed and len(REPLAYS) > 0,
         f"{len(REPLAYS)} traces, {rounds} traffic rounds re-resolved, failures: {failed or 'none'}")

