import math
from fractions import Fraction

import numpy as np
import pytest

from ttsops.metrics import (HqThreshold, build_report, count_hq, cumulative_histogram, fisher_ci, format_ratio,
                            hq_threshold, mst_cost, parse_grid, pearson_r, speaker_embeddings)

from conftest import random_manifest
from oracles import brute_mst_cost, prufer_to_edges


def test_prufer_decoding_gives_trees():
    # Cayley: 4^2 = 16 distinct labelled trees on 4 vertices
    import itertools
    trees = {frozenset(frozenset(e) for e in prufer_to_edges(s, 4)) for s in itertools.product(range(4), repeat=2)}
    assert len(trees) == 16


def test_hq_threshold():
    assert hq_threshold({"s1": 4.1, "s2": 3.6, "s3": 3.9}).value == 3.6
    assert hq_threshold({"only": 2.5}).value == 2.5
    with pytest.raises(ValueError):
        hq_threshold({})


def test_hq_threshold_fold_min(rng):
    from functools import reduce
    for _ in range(50):
        m = {f"s{i}": float(v) for i, v in enumerate(rng.uniform(1, 5, int(rng.integers(1, 30))))}
        assert hq_threshold(m).value == reduce(min, m.values())


def test_count_hq_table_ratios():
    assert format_ratio(1157, 2719) == "42.6%"
    assert format_ratio(578, 2719) == "21.3%"
    scores = {f"s{i}": (4.0 if i < 1157 else 2.0) for i in range(2719)}
    count, ratio = count_hq(scores, HqThreshold(3.0))
    assert (count, ratio) == (1157, "42.6%")
    assert count_hq(scores, 3.0).ratio == Fraction(1157, 2719)


def test_count_hq_edges(rng):
    scores = {"a": 3.0, "b": 3.5}
    assert tuple(count_hq(scores, 4.0)) == (0, "0.0%")
    assert count_hq(scores, 3.0).count == 1  # strictly higher
    assert count_hq(scores, 0.5).count == 2
    for _ in range(50):
        s = {f"s{i}": float(v) for i, v in enumerate(np.round(rng.uniform(1, 5, 40), 1))}
        t = float(np.round(rng.uniform(1, 5), 1))
        n = 0
        for v in s.values():
            if v > t:
                n += 1
        assert count_hq(s, t).count == n


def test_format_ratio_rounds_half_up():
    assert format_ratio(1, 8) == "12.5%"
    assert format_ratio(1, 16) == "6.3%"  # 6.25 exactly
    assert format_ratio(0, 5) == "0.0%"


def test_mst_hand_cases():
    assert mst_cost([[0.0], [1.0], [2.0]]) == pytest.approx(2.0)
    assert mst_cost([[0, 0], [1, 0], [0, 1], [1, 1]]) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        mst_cost([[1.0, 2.0]])


def test_mst_matches_prufer_enumeration(rng):
    for _ in range(60):
        n, d = int(rng.integers(2, 8)), int(rng.choice([1, 2, 3, 8]))
        pts = rng.normal(size=(n, d))
        assert mst_cost(pts) == pytest.approx(brute_mst_cost(pts.tolist()), abs=1e-9)


def test_mst_invariances(rng):
    for _ in range(20):
        pts = rng.normal(size=(int(rng.integers(2, 30)), 3))
        w = mst_cost(pts)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        assert mst_cost(pts[rng.permutation(len(pts))]) == pytest.approx(w)
        assert mst_cost(pts @ q.T + rng.normal(size=3)) == pytest.approx(w)
        assert mst_cost(pts * 2.5) == pytest.approx(2.5 * w)


def test_cumulative_histogram():
    assert cumulative_histogram([3.0, 3.5, 4.0], [2.5, 3.25, 3.75]) == [3, 2, 1]
    assert cumulative_histogram([3.0], []) == []
    assert cumulative_histogram([3.0, 3.0], [3.0]) == [0]
    with pytest.raises(ValueError):
        cumulative_histogram([1.0], [2.0, 1.0])


def test_cumulative_histogram_scan(rng):
    for _ in range(30):
        s = np.round(rng.uniform(1, 5, 50), 2)
        g = np.unique(np.round(rng.uniform(1, 5, 12), 2))
        got = cumulative_histogram(s, g)
        assert got == [sum(1 for v in s if v > t) for t in g]
        assert all(a >= b for a, b in zip(got, got[1:]))


def test_parse_grid():
    g = parse_grid("1.0:5.0:0.05")
    assert len(g) == 81 and g[0] == 1.0 and g[-1] == 5.0 and g[1] == 1.05
    with pytest.raises(ValueError):
        parse_grid("5:1:0.1")


def test_pearson():
    x = np.arange(10.0)
    assert pearson_r(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson_r(x, -x) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson_r([1, 2], [1, 2])


def test_pearson_two_pass(rng):
    for _ in range(30):
        n = int(rng.integers(3, 100))
        x, y = rng.normal(size=n), rng.normal(size=n)
        mx, my = sum(x) / n, sum(y) / n
        cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
        vx = sum((a - mx) ** 2 for a in x)
        vy = sum((b - my) ** 2 for b in y)
        assert pearson_r(x, y) == pytest.approx(cov / math.sqrt(vx * vy), abs=1e-12)


def test_fisher_ci_reference_intervals():
    lo, hi = fisher_ci(0.81, 200)
    assert (round(lo, 2), round(hi, 2)) == (0.76, 0.85)
    assert lo == pytest.approx(0.756, abs=5e-4) and hi == pytest.approx(0.853, abs=5e-4)
    lo, hi = fisher_ci(0.88, 200)
    assert (round(lo, 2), round(hi, 2)) == (0.84, 0.91)


def test_fisher_ci_properties():
    lo, hi = fisher_ci(0.0, 50)
    assert lo == pytest.approx(-hi)
    widths = []
    for n in (4, 10, 50, 500):
        lo, hi = fisher_ci(0.6, n)
        assert lo < 0.6 < hi
        widths.append(hi - lo)
    assert widths == sorted(widths, reverse=True)
    assert fisher_ci(0.5, 30, 0.99)[0] < fisher_ci(0.5, 30, 0.90)[0]
    for bad in ((1.0, 10), (0.5, 3)):
        with pytest.raises(ValueError):
            fisher_ci(*bad)
    with pytest.raises(ValueError):
        fisher_ci(0.5, 30, 0.8)


def test_build_report(rng):
    pool = random_manifest(rng, n_groups=5, d=3)
    groups = sorted(pool.groups())
    scores = {g: 2.0 + i * 0.5 for i, g in enumerate(groups)}
    ref = {"r1": 2.9, "r2": 4.5}
    emb = speaker_embeddings(pool)
    rep = build_report(scores, ref, [1.0, 3.0], emb, actual_scores={g: s + 0.1 for g, s in scores.items()})
    hq = [g for g in groups if scores[g] > 2.9]
    assert rep.hq.count == len(hq)
    assert rep.mst_cost == pytest.approx(mst_cost([emb[g] for g in hq]))
    assert rep.histogram == [5, 2]
    assert rep.correlation["r"] == pytest.approx(1.0)
    d = rep.to_dict()
    assert d["hq"]["ratio"] == "3/5" and d["hq"]["ratio_str"] == "60.0%"
    assert "ci_low" not in d["correlation"]  # r == 1 has no Fisher interval
