"""Evaluation metrics: truncated mean average precision (mAP@K), mean
first-relevant rank (MeanR), the four-condition retrieval report, and the
equal error rate over text-prompt trials."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import project
from .numerics import l2_normalize_rows
from .retrieval import build_index, make_index, retrieve


class NoRelevantError(ValueError):
    pass


def average_precision_at_k(ranked_labels, query_label, k):
    """AP truncated at rank k, normalized by min(R, k) where R is the
    number of relevant items in the full ranked database."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not ranked_labels:
        raise ValueError("ranked list is empty")
    total_relevant = sum(1 for lab in ranked_labels if lab == query_label)
    if total_relevant == 0:
        raise NoRelevantError(f"no relevant item for query label {query_label!r}")
    hits = 0
    ap = 0.0
    for r, lab in enumerate(ranked_labels[:k], start=1):
        if lab == query_label:
            hits += 1
            ap += hits / r
    return ap / min(total_relevant, k)


def map_at_k(aps):
    aps = list(aps)
    if not aps:
        raise ValueError("no counted queries")
    return 100.0 * float(np.mean(aps))


def first_relevant_rank(ranked_labels, query_label):
    for r, lab in enumerate(ranked_labels, start=1):
        if lab == query_label:
            return r
    raise NoRelevantError(f"no relevant item for query label {query_label!r}")


def mean_rank(ranks, all_relevant=False, rank_lists=None):
    """Mean of per-query first-relevant ranks (1-based). With
    all_relevant=True, averages over every relevant item's rank instead
    (pass per-query rank lists)."""
    if all_relevant:
        vals = [float(np.mean(rl)) for rl in rank_lists]
    else:
        vals = list(ranks)
    if not vals:
        raise ValueError("no counted queries")
    return float(np.mean(vals))


CONDITIONS = ("s2t_plain", "s2t_fused", "t2s_plain", "t2s_fused")


@dataclass
class RetrievalReport:
    k: int
    fuse_n: int
    n_speaker_queries: int
    n_text_queries: int
    conditions: dict = field(default_factory=dict)
    # per condition: {"map_at_k", "mean_rank", "n_queries", "n_excluded", "ranks"}

    def to_json(self):
        return json.dumps({
            "k": self.k, "fuse_n": self.fuse_n,
            "n_speaker_queries": self.n_speaker_queries,
            "n_text_queries": self.n_text_queries,
            "conditions": self.conditions,
        }, sort_keys=True, indent=2)


def _eval_direction(direction, queries, query_ids, query_labels, spk_index, txt_index,
                    k, fuse_n, weighting):
    out = {}
    for mode in ("plain", "fused"):
        aps, ranks = [], []
        excluded = 0
        for q, qid, qlab in zip(queries, query_ids, query_labels):
            ranked = retrieve(direction, q, spk_index, txt_index, mode=mode,
                              fuse_n=fuse_n, weighting=weighting, query_id=qid)
            target = txt_index if direction == "s2t" else spk_index
            pos = {cid: s for cid, s in zip(target.ids, target.speakers)}
            labels = [pos[cid] for cid in ranked.ids()]
            try:
                aps.append(average_precision_at_k(labels, qlab, k))
                ranks.append(first_relevant_rank(labels, qlab))
            except NoRelevantError:
                excluded += 1
        cond = f"{direction}_{mode}"
        out[cond] = {
            "map_at_k": map_at_k(aps),
            "mean_rank": mean_rank(ranks),
            "n_queries": len(aps),
            "n_excluded": excluded,
            "ranks": ranks,
        }
    return out


def evaluate_embeddings(spk_matrix, spk_manifest, txt_matrix, txt_manifest,
                        k=10, fuse_n=10, weighting="uniform"):
    """Four-condition evaluation over already-projected (or raw, for the
    unlinked baseline) embedding matrices of matching dimension."""
    spk_m = l2_normalize_rows(spk_matrix)
    txt_m = l2_normalize_rows(txt_matrix)
    spk_index = make_index(spk_m, [e.id for e in spk_manifest.entries],
                           [e.speaker for e in spk_manifest.entries], "speaker")
    txt_index = make_index(txt_m, [e.id for e in txt_manifest.entries],
                           [e.speaker for e in txt_manifest.entries], "text")
    conditions = {}
    conditions.update(_eval_direction(
        "s2t", spk_m, spk_index.ids, spk_index.speakers, spk_index, txt_index,
        k, fuse_n, weighting))
    conditions.update(_eval_direction(
        "t2s", txt_m, txt_index.ids, txt_index.speakers, spk_index, txt_index,
        k, fuse_n, weighting))
    return RetrievalReport(k=k, fuse_n=fuse_n,
                           n_speaker_queries=spk_index.size,
                           n_text_queries=txt_index.size,
                           conditions=conditions)


def evaluate(params, spk_set, spk_manifest, txt_set, txt_manifest,
             k=10, fuse_n=10, weighting="uniform"):
    """Project both modalities through the checkpoint and evaluate all
    four retrieval conditions."""
    spk_rows = spk_set.data[[e.row for e in spk_manifest.entries]]
    txt_rows = txt_set.data[[e.row for e in txt_manifest.entries]]
    spk_p = project(params, spk_rows, "speaker")
    txt_p = project(params, txt_rows, "text")
    return evaluate_embeddings(spk_p, spk_manifest, txt_p, txt_manifest,
                               k=k, fuse_n=fuse_n, weighting=weighting)


@dataclass
class EerReport:
    eer_percent: float
    threshold: float
    n_target: int
    n_nontarget: int


def text_eer(embeddings, labels):
    """EER over all-pairs cosine trials; target iff same label. The EER is
    found by linear interpolation between adjacent operating points."""
    x = l2_normalize_rows(np.asarray(embeddings, dtype=np.float64))
    y = list(labels)
    n = len(y)
    scores, targets = [], []
    for i in range(n):
        for j in range(i + 1, n):
            scores.append(float(x[i] @ x[j]))
            targets.append(y[i] == y[j])
    scores = np.array(scores)
    targets = np.array(targets)
    n_t = int(targets.sum())
    n_nt = int((~targets).sum())
    if n_t == 0:
        raise ValueError("no target trials")
    if n_nt == 0:
        raise ValueError("no non-target trials")
    return EerReport(*_eer_from_scores(scores, targets), n_target=n_t, n_nontarget=n_nt)


def _eer_from_scores(scores, targets):
    """(EER percent, threshold). Operating points are the distinct score
    thresholds; FAR(t) = P(nontarget >= t), FRR(t) = P(target < t)."""
    n_t = targets.sum()
    n_nt = (~targets).sum()
    thresholds = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    far = np.array([(scores[~targets] >= t).sum() / n_nt for t in thresholds])
    frr = np.array([(scores[targets] < t).sum() / n_t for t in thresholds])
    diff = far - frr
    for i in range(len(thresholds) - 1):
        if diff[i] >= 0 and diff[i + 1] <= 0:
            d0, d1 = diff[i], diff[i + 1]
            if d0 == d1:
                frac = 0.0
            else:
                frac = d0 / (d0 - d1)
            eer = far[i] + frac * (far[i + 1] - far[i])
            t0 = thresholds[i] if np.isfinite(thresholds[i]) else thresholds[i + 1]
            t1 = thresholds[i + 1] if np.isfinite(thresholds[i + 1]) else thresholds[i]
            thr = t0 + frac * (t1 - t0)
            return 100.0 * float(eer), float(thr)
    return 100.0 * float(min(np.maximum(far, frr))), float(thresholds[int(np.argmin(np.maximum(far, frr)))])
