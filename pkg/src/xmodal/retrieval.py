"""Inference path: per-modality search indexes over projection-layer
outputs, exact cosine nearest-neighbor queries, top-N fusion into the
other modality, and the LDA alignment used by the unlinked baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import cholesky, l2_normalize, l2_normalize_rows, sym_eig
from .model import project


@dataclass(frozen=True)
class SearchIndex:
    modality: str
    matrix: np.ndarray  # unit-norm rows, float64
    ids: tuple
    speakers: tuple

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass
class RankedList:
    query_id: str
    items: list  # (candidate id, score) descending score, ties by ascending id

    def ids(self):
        return [i for i, _ in self.items]


def make_index(matrix, ids, speakers, modality):
    m = l2_normalize_rows(np.asarray(matrix, dtype=np.float64))
    m.setflags(write=False)
    return SearchIndex(modality=modality, matrix=m, ids=tuple(ids), speakers=tuple(speakers))


def build_index(params, emb_set, manifest, modality):
    """Index of projection-layer outputs for every manifest entry."""
    manifest.validate(emb_set)
    rows = emb_set.data[[e.row for e in manifest.entries]]
    x_p = project(params, rows, modality)
    return make_index(x_p, [e.id for e in manifest.entries],
                      [e.speaker for e in manifest.entries], modality)


def nearest_k(index, query, k, query_id="query"):
    """Exact exhaustive top-k by cosine; ties broken by ascending id."""
    if index.size == 0:
        raise ValueError("empty index")
    if not (1 <= k <= index.size):
        raise ValueError(f"k must be in [1, {index.size}]")
    q = l2_normalize(np.asarray(query, dtype=np.float64))
    scores = index.matrix @ q
    order = sorted(range(index.size), key=lambda i: (-scores[i], index.ids[i]))
    return RankedList(query_id, [(index.ids[i], float(scores[i])) for i in order[:k]])


def fuse(index, query, n=10, weighting="uniform"):
    """Replace the query by the normalized average of its top-n nearest
    rows in the other modality's index. n is clamped to the index size."""
    if index.size == 0:
        raise ValueError("empty index")
    n = min(n, index.size)
    ranked = nearest_k(index, query, n)
    pos = {cid: i for i, cid in enumerate(index.ids)}
    rows = np.array([index.matrix[pos[cid]] for cid, _ in ranked.items])
    if weighting == "uniform":
        fused = rows.mean(axis=0)
    elif weighting == "similarity":
        w = np.array([max(s, 0.0) for _, s in ranked.items])
        if w.sum() <= 0:
            w = np.ones(len(rows))
        fused = (w / w.sum()) @ rows
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return l2_normalize(fused)


def retrieve(direction, query, spk_index, txt_index, mode="plain", k_eval=None,
             fuse_n=10, weighting="uniform", query_id="query"):
    """Rank the target modality for a projected query vector.

    direction: "s2t" ranks the text index, "t2s" the speaker index.
    mode "fused" first fuses the query into the target modality over its
    top-fuse_n neighbors, then ranks against the fused vector.
    """
    if direction == "s2t":
        target = txt_index
    elif direction == "t2s":
        target = spk_index
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if k_eval is None:
        k_eval = target.size
    if mode == "plain":
        return nearest_k(target, query, k_eval, query_id)
    if mode == "fused":
        fused = fuse(target, query, fuse_n, weighting)
        return nearest_k(target, fused, k_eval, query_id)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class LdaProjection:
    matrix: np.ndarray  # d_in x target_dim
    n_classes: int
    shrinkage: float
    eigenvalues: np.ndarray


def lda_fit(embeddings, labels, target_dim=None, shrinkage=0.1):
    """Fisher discriminant directions via the S_w-whitened between-class
    eigenproblem (Cholesky whitening + Jacobi eigensolver).

    S_w is shrunk as (1-g)*S_w + g*trace(S_w)/d * I. Columns are ordered
    by descending eigenvalue; each is sign-fixed so its largest-magnitude
    entry is positive.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if not (0.0 <= shrinkage < 1.0):
        raise ValueError("shrinkage must be in [0, 1)")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    d = x.shape[1]
    mean = x.mean(axis=0)
    s_w = np.zeros((d, d))
    s_b = np.zeros((d, d))
    for c in classes:
        xc = x[y == c]
        mc = xc.mean(axis=0)
        diff = xc - mc
        s_w += diff.T @ diff
        dm = (mc - mean)[:, None]
        s_b += len(xc) * (dm @ dm.T)
    s_w /= len(x)
    s_b /= len(x)
    if shrinkage > 0:
        scale = np.trace(s_w) / d
        if scale <= 0:
            # single-sample classes leave S_w identically zero; fall back to
            # a ridge scaled by the between-class scatter
            scale = np.trace(s_b) / d
        s_w = (1.0 - shrinkage) * s_w + shrinkage * scale * np.eye(d)
    chol = cholesky(s_w)  # raises on singular S_w when shrinkage leaves it degenerate
    liv = np.linalg.inv(chol)
    m = liv @ s_b @ liv.T
    m = 0.5 * (m + m.T)
    evals, evecs = sym_eig(m)
    dirs = liv.T @ evecs
    for j in range(dirs.shape[1]):
        lead = np.argmax(np.abs(dirs[:, j]))
        if dirs[lead, j] < 0:
            dirs[:, j] = -dirs[:, j]
    if target_dim is None:
        target_dim = min(len(classes) - 1, d)
    if not (1 <= target_dim <= d):
        raise ValueError("target_dim out of range")
    return LdaProjection(matrix=dirs[:, :target_dim], n_classes=len(classes),
                         shrinkage=shrinkage, eigenvalues=evals[:target_dim])


def lda_apply(proj, embeddings):
    x = np.asarray(embeddings, dtype=np.float64)
    return l2_normalize_rows(x @ proj.matrix)


def fisher_ratio(embeddings, labels, direction):
    """Between- over within-class variance of projections onto a direction."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    v = l2_normalize(np.asarray(direction, dtype=np.float64))
    z = x @ v
    grand = z.mean()
    sb = sw = 0.0
    for c in set(y.tolist()):
        zc = z[y == c]
        sb += len(zc) * (zc.mean() - grand) ** 2
        sw += np.sum((zc - zc.mean()) ** 2)
    return sb / max(sw, 1e-300)
