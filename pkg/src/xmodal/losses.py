"""Training objectives: symmetric cross-modal InfoNCE at the projection and
transform levels, the AAM-softmax speaker regularizer, and the supervised
contrastive variant. Each loss returns its value together with analytic
gradients; the finite-difference oracle in numerics verifies them.

Gradient convention: losses that consume a SimilarityMatrix return
dLoss/dS with respect to the raw (un-tempered) similarities. The
temperature gradient follows from the chain rule,
dLoss/d(log tau) = -sum(dLoss/dS * S), see grad_log_tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SimilarityMatrix:
    values: np.ndarray  # N x N, S[i, j] = x_s_i . x_t_j
    tau: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ValueError("similarity matrix must be square")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite similarities")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")

    @property
    def n(self):
        return self.values.shape[0]


def similarity(x_s, x_t, tau):
    return SimilarityMatrix(np.asarray(x_s) @ np.asarray(x_t).T, tau)


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def grad_log_tau(sim, d_s):
    """Chain-rule gradient of a loss wrt log(tau), given its dLoss/dS."""
    return -float(np.sum(d_s * sim.values))


def info_nce_directional(sim):
    """Mean over rows of -log softmax(S/tau) at the diagonal."""
    n = sim.n
    z = sim.values / sim.tau
    p = _softmax_rows(z)
    logp = z - z.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    loss = -float(np.mean(np.diag(logp)))
    grad = (p - np.eye(n)) / (n * sim.tau)
    return loss, grad


def cts_pair(sim):
    """Symmetrized pair loss: mean of the two directional losses."""
    l1, g1 = info_nce_directional(sim)
    l2, g2 = info_nce_directional(SimilarityMatrix(sim.values.T, sim.tau))
    return 0.5 * (l1 + l2), 0.5 * (g1 + g2.T)


def cts_total(sim_p, sim_t):
    """Sum of the pair losses at the projection and transform levels."""
    if sim_p.n != sim_t.n:
        raise ValueError("batch size mismatch between branches")
    lp, gp = cts_pair(sim_p)
    lt, gt = cts_pair(sim_t)
    return lp + lt, gp, gt


def aam_softmax(outputs, labels, weights, margin, scale):
    """Additive angular margin softmax over cosine logits.

    outputs: N x d unit rows; weights: C x d unit rows; labels: N ints.
    True-class logit uses cos(theta + m), with the conventional fallback
    cos(theta) - m*sin(m) once theta + m would pass pi. Returns
    (loss, d_outputs, d_weights).
    """
    x = np.asarray(outputs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, c = x.shape[0], w.shape[0]
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError("label out of range")
    cos = x @ w.T
    if np.max(np.abs(cos)) > 1.0 + 1e-6:
        raise ValueError("cosine logits out of [-1, 1]")
    cos = np.clip(cos, -1.0 + 1e-12, 1.0 - 1e-12)
    sin_t = np.sqrt(1.0 - cos ** 2)
    cos_m, sin_m = np.cos(margin), np.sin(margin)

    target_cos = cos[np.arange(n), y]
    target_sin = sin_t[np.arange(n), y]
    phi = target_cos * cos_m - target_sin * sin_m
    easy = target_cos > np.cos(np.pi - margin)
    phi = np.where(easy, phi, target_cos - margin * sin_m)
    # d(phi)/d(cos theta_y)
    dphi = np.where(easy, cos_m + sin_m * target_cos / target_sin, 1.0)

    logits = scale * cos
    logits[np.arange(n), y] = scale * phi
    p = _softmax_rows(logits)
    logp = logits - logits.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(n), y]))

    d_logits = p.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    d_cos = scale * d_logits
    d_cos[np.arange(n), y] *= dphi
    return loss, d_cos @ w, d_cos.T @ x


def regularized_total(cts_loss, aam_loss, lam):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return cts_loss + lam * aam_loss


def _positive_mask(labels):
    y = np.asarray(labels)
    return (y[:, None] == y[None, :]).astype(np.float64)


def sup_con_directional(sim, labels):
    """Supervised contrastive loss, summed over anchors as written:
    sum_i (-1/|P(i)|) sum_{p in P(i)} log softmax(S/tau)[i, p]."""
    if len(labels) != sim.n:
        raise ValueError("labels length must match batch")
    mask = _positive_mask(labels)
    z = sim.values / sim.tau
    p = _softmax_rows(z)
    logp = z - z.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    card = mask.sum(axis=1)
    loss = -float(np.sum((mask * logp).sum(axis=1) / card))
    grad = (p - mask / card[:, None]) / sim.tau
    return loss, grad


def sup_con_pair(sim, labels):
    l1, g1 = sup_con_directional(sim, labels)
    l2, g2 = sup_con_directional(SimilarityMatrix(sim.values.T, sim.tau), labels)
    return 0.5 * (l1 + l2), 0.5 * (g1 + g2.T)


def sup_cts_total(sim_p, sim_t, labels):
    """Supervised analog of the two-level total loss."""
    if sim_p.n != sim_t.n:
        raise ValueError("batch size mismatch between branches")
    lp, gp = sup_con_pair(sim_p, labels)
    lt, gt = sup_con_pair(sim_t, labels)
    return lp + lt, gp, gt
