"""Dissimilarities, threshold rule, agglomeration, and ARI against oracles."""

import math

import numpy as np
import pytest

from factorcluster.errors import EstimationError
from factorcluster.clustering import (
    adjusted_rand_index,
    cluster,
    residual_cov,
    run_clustering_pipeline,
    scod_matrix,
    select_threshold,
)
from factorcluster.panel import ClusterPartition


def scod_oracle(s):
    """Triple-loop transcription of the dissimilarity definition."""
    p = s.shape[0]
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            best = -np.inf
            for l in range(p):
                if l in (i, j):
                    continue
                denom = math.sqrt((s[i, i] + s[j, j] - 2 * s[i, j]) * s[l, l])
                best = max(best, abs(s[i, l] - s[j, l]) / denom)
            out[i, j] = best
    return out


def residual_cov_oracle(u):
    t_len, p = u.shape
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            out[i, j] = sum(u[t, i] * u[t, j] for t in range(t_len)) / t_len
    return out


def single_linkage_cut_oracle(d, gamma):
    """O(p^3) single-linkage agglomeration, merging while min < gamma."""
    p = d.shape[0]
    groups = [[i] for i in range(p)]
    while len(groups) > 1:
        best = np.inf
        best_pair = None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                link = min(d[i, j] for i in groups[a] for j in groups[b])
                key = (min(min(groups[a]), min(groups[b])),
                       max(min(groups[a]), min(groups[b])))
                if link < best or (link == best and key < best_pair[0]):
                    best = link
                    best_pair = (key, a, b)
        if not best < gamma:
            break
        _, a, b = best_pair
        merged = sorted(groups[a] + groups[b])
        groups = [g for k, g in enumerate(groups) if k not in (a, b)]
        groups.append(merged)
    return ClusterPartition.from_groups(groups, p)


def connected_components_oracle(d, gamma):
    """BFS components of the graph with edges D_ij < gamma."""
    p = d.shape[0]
    seen = [False] * p
    groups = []
    for start in range(p):
        if seen[start]:
            continue
        queue = [start]
        seen[start] = True
        comp = []
        while queue:
            i = queue.pop()
            comp.append(i)
            for j in range(p):
                if j != i and not seen[j] and d[i, j] < gamma:
                    seen[j] = True
                    queue.append(j)
        groups.append(sorted(comp))
    return ClusterPartition.from_groups(groups, p)


def ari_oracle(la, lb):
    """Pair-counting ARI: classify every index pair by joint agreement."""
    n = len(la)
    a11 = a00 = a10 = a01 = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a = la[i] == la[j]
            same_b = lb[i] == lb[j]
            if same_a and same_b:
                a11 += 1
            elif same_a:
                a10 += 1
            elif same_b:
                a01 += 1
            else:
                a00 += 1
    pairs = n * (n - 1) // 2
    sum_a = a11 + a10
    sum_b = a11 + a01
    expected = sum_a * sum_b / pairs if pairs else 0.0
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 1.0
    return (a11 - expected) / (maximum - expected)


def random_spd_cov(rng, p):
    x = rng.normal(size=(p + 3, p))
    return x.T @ x / (p + 3) + 0.1 * np.eye(p)


def test_residual_cov_matches_oracle():
    rng = np.random.default_rng(20)
    for _ in range(20):
        u = rng.normal(size=(int(rng.integers(2, 15)), int(rng.integers(1, 8))))
        assert np.allclose(residual_cov(u), residual_cov_oracle(u), atol=1e-12)


def test_residual_cov_rejects_bad_shapes():
    with pytest.raises(ValueError):
        residual_cov(np.zeros(4))
    with pytest.raises(ValueError):
        residual_cov(np.zeros((1, 4)))


def test_scod_hand_value():
    s = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.2], [0.2, 0.2, 1.0]])
    d = scod_matrix(s)
    # only probe for the (0, 2) pair is l=1:
    # |S_01 - S_21| / sqrt((S_00 + S_22 - 2 S_02) * S_11) = 0.3 / sqrt(1.6)
    assert d[0, 2] == pytest.approx(0.3 / math.sqrt(1.6), rel=1e-14)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0.0)


def test_scod_two_cluster_population_value():
    # two clusters of two series each, unit idiosyncratic variance,
    # cluster covariance [[1, .3], [.3, 1]]: cross-pair value 0.7/sqrt(6.8)
    a = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    sz = np.array([[1.0, 0.3], [0.3, 1.0]])
    s = a @ sz @ a.T + np.eye(4)
    d = scod_matrix(s)
    assert d[0, 2] == pytest.approx(0.7 / math.sqrt(6.8), rel=1e-12)
    # within-cluster pairs have zero population dissimilarity
    assert d[0, 1] == pytest.approx(0.0, abs=1e-14)
    assert d[2, 3] == pytest.approx(0.0, abs=1e-14)


def test_scod_matches_oracle_on_random_instances():
    rng = np.random.default_rng(21)
    for _ in range(60):
        p = int(rng.integers(3, 11))
        s = random_spd_cov(rng, p)
        assert np.allclose(scod_matrix(s), scod_oracle(s), atol=1e-12)


def test_scod_rejects_small_or_asymmetric():
    with pytest.raises(ValueError, match="at least 3"):
        scod_matrix(np.eye(2))
    s = random_spd_cov(np.random.default_rng(22), 4)
    s[0, 1] += 1.0
    with pytest.raises(ValueError, match="not symmetric"):
        scod_matrix(s)


def test_scod_rejects_nonpositive_variance():
    s = np.eye(3)
    s[1, 1] = 0.0
    with pytest.raises(EstimationError, match="l=1"):
        scod_matrix(s)


def test_scod_rejects_identical_series():
    # series 0 and 1 perfectly correlated with equal variance
    s = np.array([[1.0, 1.0, 0.1], [1.0, 1.0, 0.1], [0.1, 0.1, 1.0]])
    with pytest.raises(EstimationError, match=r"i=0, j=1"):
        scod_matrix(s)


def scod_from_values(p, vals):
    m = np.zeros((p, p))
    iu = np.triu_indices(p, 1)
    m[iu] = vals
    return m + m.T


def test_threshold_hand_example():
    # sorted descending: 0.9, 0.85, 0.8, 0.05, 0.04, 0.01; delta=0.01
    # largest successive ratio is (0.8+0.01)/(0.05+0.01) at m=3
    m = scod_from_values(4, [0.9, 0.85, 0.8, 0.05, 0.04, 0.01])
    sel = select_threshold(m, delta=0.01, c_q=1.0)
    assert sel.q_hat == 3
    assert sel.gamma == pytest.approx(0.8)
    assert np.array_equal(sel.sorted_values, [0.9, 0.85, 0.8, 0.05, 0.04, 0.01])


def test_threshold_cq_caps_search_range():
    # with c_q = 1/3 only m in {1, 2} are searched, so the big drop at
    # m=3 is out of range; m=2 has the larger in-range ratio
    m = scod_from_values(4, [0.9, 0.85, 0.8, 0.05, 0.04, 0.01])
    sel = select_threshold(m, delta=0.01, c_q=1 / 3)
    assert sel.q_hat <= math.ceil(6 / 3)
    assert sel.q_hat == 2
    assert sel.gamma == pytest.approx(0.85)


def test_threshold_oracle_loop():
    rng = np.random.default_rng(23)
    for _ in range(40):
        p = int(rng.integers(3, 9))
        q = p * (p - 1) // 2
        vals = np.round(rng.uniform(0.0, 1.0, size=q), 3)
        delta = float(rng.choice([0.0, 0.01, 0.1]))
        c_q = float(rng.choice([0.5, 0.75, 0.95, 1.0]))
        sel = select_threshold(scod_from_values(p, vals), delta=delta, c_q=c_q)
        svals = np.sort(vals)[::-1]
        d = max(delta, 1e-12)
        m_max = min(math.ceil(c_q * q), q - 1)
        best_m, best_ratio = None, -np.inf
        for m in range(1, m_max + 1):
            ratio = (svals[m - 1] + d) / (svals[m] + d)
            if ratio > best_ratio:
                best_m, best_ratio = m, ratio
        assert sel.q_hat == best_m
        assert sel.gamma == svals[best_m - 1]


def test_threshold_tie_takes_smallest_m():
    # equal ratios at m=1 and m=3: values 4,2,4,2 -> ratios 2, .5... build
    # explicitly: sorted 0.8,0.4,0.4,0.2,0.1,0.05: ratios 2,1,2,2,2
    m = scod_from_values(4, [0.8, 0.4, 0.4, 0.2, 0.1, 0.05])
    sel = select_threshold(m, delta=0.0, c_q=1.0)
    assert sel.q_hat == 1


def test_threshold_parameter_validation():
    m = scod_from_values(3, [0.5, 0.4, 0.3])
    with pytest.raises(ValueError, match="delta"):
        select_threshold(m, delta=-1.0)
    with pytest.raises(ValueError, match="c_q"):
        select_threshold(m, c_q=0.0)
    with pytest.raises(ValueError, match="c_q"):
        select_threshold(m, c_q=1.5)


def test_cluster_matches_both_oracles():
    rng = np.random.default_rng(24)
    for _ in range(60):
        p = int(rng.integers(2, 12))
        d = np.abs(symmetric_noise(rng, p))
        gamma = float(rng.uniform(0.05, 1.0))
        got = cluster(d, gamma)
        assert got == single_linkage_cut_oracle(d, gamma)
        assert got == connected_components_oracle(d, gamma)


def symmetric_noise(rng, p):
    m = rng.uniform(0.0, 1.0, size=(p, p))
    m = (m + m.T) / 2
    np.fill_diagonal(m, 0.0)
    return m


def test_cluster_ties_merge_smallest_indices_first():
    # three pairs tied at 0.1; merge order must be (0,1) then (2,3)
    d = np.full((4, 4), 0.5)
    np.fill_diagonal(d, 0.0)
    d[0, 1] = d[1, 0] = 0.1
    d[2, 3] = d[3, 2] = 0.1
    part = cluster(d, 0.2)
    assert part.groups == ((0, 1), (2, 3))


def test_cluster_strict_threshold_excludes_equal_values():
    d = np.zeros((3, 3))
    d[0, 1] = d[1, 0] = 0.5
    d[0, 2] = d[2, 0] = 0.7
    d[1, 2] = d[2, 1] = 0.7
    part = cluster(d, 0.5)
    assert part.n_clusters == 3
    part = cluster(d, 0.5000001)
    assert part.groups == ((0, 1), (2,))


def test_cluster_rejects_nonpositive_gamma():
    d = symmetric_noise(np.random.default_rng(25), 4)
    with pytest.raises(EstimationError, match="> 0"):
        cluster(d, 0.0)


def test_pipeline_recovers_planted_partition():
    rng = np.random.default_rng(26)
    t_len, sizes = 400, (5, 4, 3)
    p = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    z = rng.normal(size=(t_len, len(sizes)))
    u = z[:, labels] + 0.5 * rng.normal(size=(t_len, p))
    result = run_clustering_pipeline(u)
    expected = ClusterPartition.from_labels(labels)
    assert result.partition == expected
    assert result.selection.gamma > 0
    assert result.scod.shape == (p, p)


def test_ari_hand_value():
    # {1,2}{3,4} vs {1,3}{2,4}: ARI = -0.5
    assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)


def test_ari_identical_and_trivial_partitions():
    assert adjusted_rand_index([0, 0, 1, 1], [5, 5, 7, 7]) == 1.0
    assert adjusted_rand_index([0, 1, 2], [2, 0, 1]) == 1.0  # all singletons
    assert adjusted_rand_index([0, 0, 0], [1, 1, 1]) == 1.0  # single cluster


def test_ari_matches_pair_counting_oracle():
    rng = np.random.default_rng(27)
    for _ in range(60):
        n = int(rng.integers(2, 12))
        la = rng.integers(0, 4, size=n).tolist()
        lb = rng.integers(0, 4, size=n).tolist()
        assert adjusted_rand_index(la, lb) == pytest.approx(
            ari_oracle(la, lb), abs=1e-12
        )


def test_ari_accepts_partitions_and_is_symmetric():
    a = ClusterPartition.from_groups([(0, 1), (2, 3, 4)], 5)
    b = ClusterPartition.from_groups([(0, 1, 2), (3, 4)], 5)
    assert adjusted_rand_index(a, b) == pytest.approx(
        adjusted_rand_index(b, a)
    )
    assert adjusted_rand_index(a, b) == pytest.approx(
        adjusted_rand_index(a.labels, b.labels)
    )


def test_ari_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 2])
