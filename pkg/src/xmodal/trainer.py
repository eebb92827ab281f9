"""Deterministic minibatch training loop: paired batch construction, Adam
with bias correction, loss-mode dispatch, per-epoch checkpointing, and the
finite-difference gradient-check harness."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .embio import validate_pairing
from .model import (LinkerConfig, TAU_MAX, TAU_MIN, backward, forward,
                    init_params, save_checkpoint)
from .numerics import finite_diff_grad, seeded_rng

LOSS_MODES = ("cts", "cts_spk", "cts_supcon")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss_mode: str = "cts"
    batch_size: int = 64
    epochs: int = 1
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 0.1
    seed: int = 0
    shuffle: bool = True

    def validate(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for contrastive training")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        return self


@dataclass
class PairedBatch:
    speaker_rows: np.ndarray
    text_rows: np.ndarray
    labels: np.ndarray  # int class index per pair
    pair_ids: list


def speaker_classes(speaker_manifest):
    """Stable speaker-label -> class-index mapping (sorted labels)."""
    return {s: i for i, s in enumerate(speaker_manifest.speakers())}


def make_batches(spk_set, spk_manifest, txt_set, txt_manifest, batch_size, rng, shuffle=True):
    report = validate_pairing(spk_manifest, txt_manifest)
    if not report.complete:
        raise ValueError(f"pairing incomplete: {report.missing_speaker_side} {report.missing_text_side}")
    if report.n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    classes = speaker_classes(spk_manifest)
    by_speaker_txt = {}
    for e in txt_manifest.entries:
        by_speaker_txt.setdefault(e.speaker, []).append(e)
    pairs = []
    for e in spk_manifest.entries:
        for te in by_speaker_txt[e.speaker]:
            pairs.append((e, te))
    order = rng.permutation(len(pairs)) if shuffle else np.arange(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) < 2:
            break
        se = [pairs[i][0] for i in chunk]
        te = [pairs[i][1] for i in chunk]
        batches.append(PairedBatch(
            speaker_rows=np.asarray(spk_set.data[[e.row for e in se]], dtype=np.float64),
            text_rows=np.asarray(txt_set.data[[e.row for e in te]], dtype=np.float64),
            labels=np.array([classes[e.speaker] for e in se], dtype=np.int64),
            pair_ids=[(s.id, t.id) for s, t in zip(se, te)],
        ))
    return batches


def batch_loss_and_grads(params, batch, mode, lam):
    """Forward + analytic backward for one batch under a loss mode.

    Returns (total loss, component dict, parameter-gradient dict)."""
    cfg = params.config
    out = forward(params, batch.speaker_rows, batch.text_rows)
    tau = params.tau
    sim_p = L.similarity(out.x_s_p, out.x_t_p, tau)
    sim_t = L.similarity(out.x_s_t, out.x_t_t, tau)

    if mode == "cts_supcon":
        cts, gp, gt = L.sup_cts_total(sim_p, sim_t, batch.labels)
    else:
        cts, gp, gt = L.cts_total(sim_p, sim_t)
    components = {"cts": cts}
    total = cts

    d_x_s_p = gp @ out.x_t_p
    d_x_t_p = gp.T @ out.x_s_p
    d_x_s_t = gt @ out.x_t_t
    d_x_t_t = gt.T @ out.x_s_t
    d_log_tau = L.grad_log_tau(sim_p, gp) + L.grad_log_tau(sim_t, gt)

    aam_grads = None
    if mode == "cts_spk":
        aam_loss, d_out, d_w = L.aam_softmax(out.x_s_t, batch.labels, params.tensors["aam.W"],
                                             cfg.aam_margin, cfg.aam_scale)
        components["aam"] = aam_loss
        total = L.regularized_total(cts, aam_loss, lam)
        d_x_s_t = d_x_s_t + lam * d_out
        aam_grads = lam * d_w

    grads = backward(params, out, d_x_s_p, d_x_t_p, d_x_s_t, d_x_t_t)
    if cfg.learnable_temperature:
        grads["log_tau"][0] = d_log_tau
    if aam_grads is not None:
        grads["aam.W"] = aam_grads
    return total, components, grads


@dataclass
class TrainState:
    params: "LinkerParams"
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if not self.m:
            self.m = {n: np.zeros_like(t) for n, t in self.params.tensors.items()}
            self.v = {n: np.zeros_like(t) for n, t in self.params.tensors.items()}


def adam_step(state, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard Adam with bias correction. AAM rows are re-normalized and
    the temperature clamped after the update."""
    for n, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {n}")
    state.step += 1
    t = state.step
    p = state.params
    for n in p.names():
        g = grads[n]
        state.m[n] = beta1 * state.m[n] + (1 - beta1) * g
        state.v[n] = beta2 * state.v[n] + (1 - beta2) * g * g
        m_hat = state.m[n] / (1 - beta1 ** t)
        v_hat = state.v[n] / (1 - beta2 ** t)
        p.tensors[n] = p.tensors[n] - lr * m_hat / (np.sqrt(v_hat) + eps)
    if "aam.W" in p.tensors:
        w = p.tensors["aam.W"]
        p.tensors["aam.W"] = w / np.linalg.norm(w, axis=1, keepdims=True)
    p.tensors["log_tau"] = np.clip(p.tensors["log_tau"], np.log(TAU_MIN), np.log(TAU_MAX))
    return state


def train(train_config, linker_config, spk_set, spk_manifest, txt_set, txt_manifest,
          out_dir=None, init_seed=None):
    """Run the full loop; returns (final params, loss log).

    Deterministic in (configs, data, seed): identical runs produce
    byte-identical checkpoints and logs.
    """
    tc = train_config.validate()
    report = validate_pairing(spk_manifest, txt_manifest)
    if not report.complete:
        raise ValueError("pairing incomplete")
    if tc.loss_mode == "cts_spk" and linker_config.n_speakers_train == 0:
        linker_config.n_speakers_train = report.n_speakers
    linker_config.validate()
    params = init_params(linker_config, tc.seed if init_seed is None else init_seed)
    state = TrainState(params)
    rng = seeded_rng(tc.seed, stream=1)
    log = []
    for epoch in range(tc.epochs):
        batches = make_batches(spk_set, spk_manifest, txt_set, txt_manifest,
                               tc.batch_size, rng, shuffle=tc.shuffle)
        epoch_losses = []
        comp_sums = {}
        for batch in batches:
            loss, components, grads = batch_loss_and_grads(state.params, batch, tc.loss_mode, tc.lam)
            if not np.isfinite(loss):
                if out_dir is not None:
                    save_checkpoint(state.params, os.path.join(out_dir, "ckpt_last_good.bin"))
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            adam_step(state, grads, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps)
            state.params.check_finite()
            epoch_losses.append(loss)
            for k, v in components.items():
                comp_sums[k] = comp_sums.get(k, 0.0) + v
        entry = {"epoch": epoch, "mean_loss": float(np.mean(epoch_losses))}
        for k, v in comp_sums.items():
            entry[f"mean_{k}"] = v / len(epoch_losses)
        log.append(entry)
        if out_dir is not None:
            save_checkpoint(state.params, os.path.join(out_dir, f"ckpt_epoch_{epoch}.bin"))
    if out_dir is not None:
        save_checkpoint(state.params, os.path.join(out_dir, "ckpt_final.bin"))
        with open(os.path.join(out_dir, "loss_log.jsonl"), "w", encoding="utf-8") as f:
            for entry in log:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
    return state.params, log


GRAD_CHECK_MODES = ("info_nce", "cts_pair", "cts_total", "aam", "sup_cts_total")


def _grad_check_loss(params, batch, mode):
    out = forward(params, batch.speaker_rows, batch.text_rows)
    tau = params.tau
    sim_p = L.similarity(out.x_s_p, out.x_t_p, tau)
    sim_t = L.similarity(out.x_s_t, out.x_t_t, tau)
    zeros = lambda: np.zeros_like(out.x_s_p)
    cfg = params.config
    if mode == "info_nce":
        loss, g = L.info_nce_directional(sim_p)
        gp, gt = g, None
    elif mode == "cts_pair":
        loss, g = L.cts_pair(sim_p)
        gp, gt = g, None
    elif mode == "cts_total":
        loss, gp, gt = L.cts_total(sim_p, sim_t)
    elif mode == "sup_cts_total":
        loss, gp, gt = L.sup_cts_total(sim_p, sim_t, batch.labels)
    elif mode == "aam":
        loss, d_out, d_w = L.aam_softmax(out.x_s_t, batch.labels, params.tensors["aam.W"],
                                         cfg.aam_margin, cfg.aam_scale)
        grads = backward(params, out, zeros(), zeros(), d_out, np.zeros_like(out.x_t_t))
        grads["aam.W"] = d_w
        return loss, grads
    else:
        raise ValueError(mode)
    d_x_s_p = gp @ out.x_t_p
    d_x_t_p = gp.T @ out.x_s_p
    d_log_tau = L.grad_log_tau(sim_p, gp)
    if gt is not None:
        d_x_s_t = gt @ out.x_t_t
        d_x_t_t = gt.T @ out.x_s_t
        d_log_tau += L.grad_log_tau(sim_t, gt)
    else:
        d_x_s_t = np.zeros_like(out.x_s_t)
        d_x_t_t = np.zeros_like(out.x_t_t)
    grads = backward(params, out, d_x_s_p, d_x_t_p, d_x_s_t, d_x_t_t)
    grads["log_tau"][0] = d_log_tau
    return loss, grads


def grad_check(seed=0, tolerance=1e-4, h=1e-5):
    """Analytic vs central-finite-difference gradients through the full
    model, for every loss family, on a seeded 4-sample batch.

    Uses a small GELU config so the objective is smooth everywhere.
    Returns {mode: {"max_rel_err": float, "pass": bool}}.
    """
    cfg = LinkerConfig(dim_speaker_in=6, dim_text_in=7, common_dim=8,
                       n_transform_layers=2, activation="gelu",
                       n_speakers_train=3)
    params = init_params(cfg, seed)
    rng = seeded_rng(seed, stream=2)
    s = rng.standard_normal((4, 6))
    t = rng.standard_normal((4, 7))
    batch = PairedBatch(s, t, np.array([0, 1, 1, 2]), pair_ids=[])
    report = {}
    for mode in GRAD_CHECK_MODES:
        _, grads = _grad_check_loss(params, batch, mode)
        analytic = params.unpack(params.pack())  # shape template
        for n in analytic.names():
            analytic.tensors[n] = grads[n]
        ga = analytic.pack()

        def f(theta):
            p = params.unpack(theta)
            loss, _ = _grad_check_loss(p, batch, mode)
            return loss

        gf = finite_diff_grad(f, params.pack(), h=h)
        rel = float(np.max(np.abs(ga - gf)) / (np.max(np.abs(gf)) + 1e-12))
        report[mode] = {"max_rel_err": rel, "pass": rel < tolerance}
    return report
