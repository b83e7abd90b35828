import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import all_subsets, brute_force_receptions
from sinrcast.errors import DegenerateGeometryError, InvalidInputError
from sinrcast.geometry import EUCLIDEAN_PLANE, LINE, NetworkTopology
from sinrcast.sinr import SinrEngine, SinrParams, comm_range, decodes_at_distance, interference_at, resolve_round, sinr_ratio

P = SinrParams()


def line(*xs):
    return NetworkTopology.from_positions(np.array(xs, dtype=float).reshape(-1, 1), LINE, 0.5)


def test_comm_range():
    assert comm_range(P) == 1
    assert comm_range(SinrParams(alpha=2.0)) == 1
    assert comm_range(SinrParams(power=8.0)) == pytest.approx(2.0)
    assert comm_range(SinrParams(power=1 / 8)) == pytest.approx(0.5)


def test_sinr_ratio_examples():
    topo = line(0.0, 0.5, 1.5, 1.0)   # v=0, u=1; w=2 at distance 1 from u, w=3 at 0.5
    assert sinr_ratio(0, 1, {0}, P, topo) == pytest.approx(8.0)
    assert sinr_ratio(0, 1, {0, 2}, P, topo) == pytest.approx(4.0)
    assert sinr_ratio(0, 1, {0, 3}, P, topo) == pytest.approx(8 / 9)
    assert 1 not in resolve_round({0, 3}, None, P, topo).received


def test_interference_at_examples():
    topo = line(0.0, 0.5, 1.5)
    assert interference_at(1, {0}, P, topo) == 0.0
    assert interference_at(1, {0, 2}, P, topo) == pytest.approx(1.0)
    eq = line(0.0, 0.5, 1.0)
    assert interference_at(1, {0, 2}, P, eq) == pytest.approx(8.0)
    with pytest.raises(InvalidInputError):
        interference_at(0, {0, 2}, P, eq)


def test_resolve_round_examples():
    topo = line(0.0, 0.5)
    assert resolve_round(set(), None, P, topo).received == {}
    assert resolve_round({0, 1}, None, P, topo).received == {}
    out = resolve_round({0}, {0: "m"}, P, topo)
    assert out.received == {1: (0, "m")}


def test_coincident_stations_raise():
    topo = line(0.0, 0.0, 0.3)
    with pytest.raises(DegenerateGeometryError):
        SinrEngine(topo, P)


def test_beta_below_one_rejected():
    with pytest.raises(InvalidInputError):
        SinrParams(beta=0.5)


def test_oracle_equivalence_small():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        pts = rng.uniform(0, 2, size=(n, 2))
        topo = NetworkTopology.from_positions(pts, EUCLIDEAN_PLANE, 0.5)
        engine = SinrEngine(topo, P)
        subsets = list(all_subsets(n))
        mask = np.zeros((len(subsets), n), dtype=bool)
        for i, T in enumerate(subsets):
            mask[i, list(T)] = True
        got = engine.resolve_mask(mask)
        for i, T in enumerate(subsets):
            want = brute_force_receptions(pts.tolist(), set(T))
            assert {u: int(s) for u, s in enumerate(got[i]) if s >= 0} == want


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1.0))
def test_lone_transmitter_within_range_is_decoded(d):
    topo = line(0.0, d)
    assert resolve_round({0}, None, P, topo).received[1][0] == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_at_most_one_sender_per_receiver(n, seed):
    rng = np.random.default_rng(seed)
    topo = NetworkTopology.from_positions(rng.uniform(0, 1.5, (n, 2)), EUCLIDEAN_PLANE, 0.5)
    engine = SinrEngine(topo, P)
    tx = rng.random((16, n)) < 0.4
    senders = engine.resolve_mask(tx)           # raises on a double decode
    assert np.all((senders < 0) | tx[np.arange(16)[:, None], np.maximum(senders, 0)])
    assert not np.any((senders >= 0) & tx)      # half duplex


def test_decodes_at_distance():
    assert decodes_at_distance(1.0, 0.0, P)
    assert not decodes_at_distance(1.0, 0.1, P)
    assert decodes_at_distance(0.5, 7.0, P)
