"""Independent reference computations shared by the tests."""

import math
from itertools import combinations


def brute_force_receptions(points, transmitters, alpha=3.0, beta=1.0, noise=1.0, power=None):
    """Direct per-pair evaluation of the SINR rule from coordinates.

    Returns {receiver: sender}.  Written without numpy and without the
    engine's shared power accumulator.
    """
    power = noise * beta if power is None else power
    T = sorted(transmitters)
    out = {}
    for u, pu in enumerate(points):
        if u in transmitters:
            continue
        decoded = []
        for v in T:
            signal = power * math.dist(points[v], pu) ** -alpha
            interference = 0.0
            for w in T:
                if w != v:
                    interference += power * math.dist(points[w], pu) ** -alpha
            if signal / (noise + interference) >= beta:
                decoded.append(v)
        assert len(decoded) <= 1
        if decoded:
            out[u] = decoded[0]
    return out


def apsp_diameter(points, threshold):
    """Floyd-Warshall hop diameter on the closed-threshold graph."""
    n = len(points)
    inf = math.inf
    d = [[0 if i == j else (1 if math.dist(points[i], points[j]) <= threshold else inf)
          for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return max(max(row) for row in d) if n else 0


def all_subsets(n):
    for k in range(n + 1):
        yield from combinations(range(n), k)
