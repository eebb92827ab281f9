import numpy as np
import pytest

from xmodal.embio import SynthSpec, gen_synthetic
from xmodal.metrics import (NoRelevantError, average_precision_at_k, evaluate,
                            first_relevant_rank, map_at_k, mean_rank, text_eer)
from xmodal.model import LinkerConfig, init_params
from xmodal.numerics import l2_normalize_rows, seeded_rng


def brute_force_ap_at_k(ranked_labels, query_label, k):
    """Independent oracle: direct definition, no incremental bookkeeping."""
    relevant_ranks = [r for r, lab in enumerate(ranked_labels, 1) if lab == query_label]
    total = len(relevant_ranks)
    s = 0.0
    for r in relevant_ranks:
        if r <= k:
            s += sum(1 for rr in relevant_ranks if rr <= r) / r
    return s / min(total, k)


def test_ap_single_relevant_rank1():
    assert average_precision_at_k(["a", "b", "c"], "a", 10) == 1.0


def test_ap_hand_value():
    labels = ["a", "b", "a", "b", "b"]
    assert average_precision_at_k(labels, "a", 10) == pytest.approx((1 + 2 / 3) / 2, abs=1e-4)


def test_ap_truncation():
    labels = ["b"] * 10 + ["a"]
    assert average_precision_at_k(labels, "a", 10) == 0.0


def test_ap_no_relevant_flagged():
    with pytest.raises(NoRelevantError):
        average_precision_at_k(["b", "c"], "a", 10)


def test_ap_matches_brute_force_oracle():
    rng = seeded_rng(21)
    for _ in range(2000):
        d = int(rng.integers(1, 21))
        labels = [f"l{int(rng.integers(0, 4))}" for _ in range(d)]
        q = "l0"
        if q not in labels:
            labels[int(rng.integers(0, d))] = q
        k = int(rng.integers(1, 15))
        assert average_precision_at_k(labels, q, k) == brute_force_ap_at_k(labels, q, k)


def test_ap_invariant_to_irrelevant_permutation():
    a = average_precision_at_k(["x", "a", "y", "a", "z"], "a", 10)
    b = average_precision_at_k(["y", "a", "x", "a", "z"], "a", 10)
    assert a == b


def test_map_trivial():
    assert map_at_k([1.0, 1.0]) == 100.0
    assert map_at_k([1.0, 0.5]) == 75.0
    with pytest.raises(ValueError):
        map_at_k([])


def test_map_random_scores_monte_carlo():
    # uniform random ranking, 30 candidates, 1 relevant: analytic expectation
    # of truncated AP is (1/30) * H_10
    rng = seeded_rng(22)
    d, k = 30, 10
    expected = sum(1 / r for r in range(1, k + 1)) / d
    aps = []
    for _ in range(3000):
        pos = int(rng.integers(0, d))
        aps.append(1.0 / (pos + 1) if pos < k else 0.0)
    se = np.std(aps) / np.sqrt(len(aps))
    assert abs(np.mean(aps) - expected) < 2 * se + 1e-3


def test_mean_rank_basic():
    assert mean_rank([2, 4]) == 3.0
    assert mean_rank([1, 1, 1]) == 1.0
    assert first_relevant_rank(["b", "a"], "a") == 2
    with pytest.raises(NoRelevantError):
        first_relevant_rank(["b"], "a")


def test_mean_rank_all_relevant_variant():
    assert mean_rank(None, all_relevant=True, rank_lists=[[1, 3], [2, 4]]) == 2.5


def test_mean_rank_random_permutation_oracle():
    # expected first-relevant rank for 1 relevant in D is (D+1)/2
    rng = seeded_rng(23)
    d = 15
    ranks = [int(rng.integers(1, d + 1)) for _ in range(4000)]
    se = np.std(ranks) / np.sqrt(len(ranks))
    assert abs(np.mean(ranks) - (d + 1) / 2) < 2 * se + 0.05


def test_single_swap_moves_metrics_oppositely():
    labels = ["b", "a", "b", "b"]
    improved = ["a", "b", "b", "b"]
    assert average_precision_at_k(improved, "a", 10) >= average_precision_at_k(labels, "a", 10)
    assert first_relevant_rank(improved, "a") <= first_relevant_rank(labels, "a")


def test_evaluate_structure_and_determinism():
    ss, sm, ts, tm = gen_synthetic(SynthSpec(10, 2, 8, 10, seed=30))
    params = init_params(LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12), 30)
    a = evaluate(params, ss, sm, ts, tm, k=10, fuse_n=5)
    b = evaluate(params, ss, sm, ts, tm, k=10, fuse_n=5)
    assert set(a.conditions) == {"s2t_plain", "s2t_fused", "t2s_plain", "t2s_fused"}
    assert a.to_json() == b.to_json()
    assert a.n_speaker_queries == 20 and a.n_text_queries == 10
    for cond in a.conditions.values():
        assert 0.0 <= cond["map_at_k"] <= 100.0
        assert cond["mean_rank"] >= 1.0


def test_evaluate_untrained_near_chance():
    # random projection heads should stay within 3x of the chance band
    d, k = 12, 10
    chance = 100.0 * sum(1 / r for r in range(1, k + 1)) / d
    ss, sm, ts, tm = gen_synthetic(SynthSpec(d, 1, 8, 10,
                                             cross_modal_correlation=0.0, seed=31))
    maps = []
    for seed in range(5):
        params = init_params(LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12), seed)
        rep = evaluate(params, ss, sm, ts, tm, k=k, fuse_n=5)
        maps.append(rep.conditions["s2t_plain"]["map_at_k"])
    assert np.mean(maps) < 3 * chance


def test_text_eer_separable():
    x = np.vstack([np.tile([1.0, 0, 0], (3, 1)), np.tile([0, 1.0, 0], (3, 1))])
    rep = text_eer(x, ["a"] * 3 + ["b"] * 3)
    assert rep.eer_percent == pytest.approx(0.0, abs=1e-9)
    assert rep.n_target == 6 and rep.n_nontarget == 9


def test_text_eer_random_near_50():
    rng = seeded_rng(33)
    x = rng.standard_normal((40, 16))
    labels = [f"s{i % 8}" for i in range(40)]
    rep = text_eer(x, labels)
    assert 30.0 < rep.eer_percent < 70.0


def test_text_eer_requires_targets():
    with pytest.raises(ValueError, match="target"):
        text_eer(np.eye(3), ["a", "b", "c"])


def brute_force_eer(scores, targets):
    """Oracle over the same operating-point definition, computed directly."""
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets, dtype=bool)
    pts = []
    for t in np.concatenate(([-np.inf], np.unique(scores), [np.inf])):
        far = np.mean(scores[~targets] >= t)
        frr = np.mean(scores[targets] < t)
        pts.append((far, frr))
    for (f0, r0), (f1, r1) in zip(pts, pts[1:]):
        d0, d1 = f0 - r0, f1 - r1
        if d0 >= 0 and d1 <= 0:
            frac = 0.0 if d0 == d1 else d0 / (d0 - d1)
            return 100.0 * (f0 + frac * (f1 - f0))
    return 100.0 * min(max(f, r) for f, r in pts)


def test_eer_monotone_transform_invariant():
    rng = seeded_rng(34)
    x = l2_normalize_rows(rng.standard_normal((20, 8)))
    labels = [f"s{i % 4}" for i in range(20)]
    rep = text_eer(x, labels)
    scores, targets = [], []
    for i in range(20):
        for j in range(i + 1, 20):
            scores.append(float(x[i] @ x[j]))
            targets.append(labels[i] == labels[j])
    transformed = np.exp(3.0 * np.asarray(scores))  # strictly monotone
    assert brute_force_eer(transformed, targets) == pytest.approx(rep.eer_percent, abs=1e-9)
