import json

import numpy as np
import pytest

from xmodal.embio import SynthSpec, gen_synthetic
from xmodal.model import LinkerConfig, init_params, load_checkpoint
from xmodal.numerics import seeded_rng
from xmodal.trainer import (TrainConfig, TrainState, adam_step, grad_check,
                            make_batches, train)


def small_dataset(n_speakers=4, utts=1, seed=0, **kw):
    return gen_synthetic(SynthSpec(n_speakers, utts, 8, 10, seed=seed, **kw))


def test_make_batches_covers_all_speakers():
    ss, sm, ts, tm = small_dataset(4, 1)
    batches = make_batches(ss, sm, ts, tm, 2, seeded_rng(0), shuffle=True)
    assert len(batches) == 2
    seen = {sid for b in batches for sid, _ in b.pair_ids}
    assert len(seen) == 4


def test_make_batches_prompt_repeats_across_utts():
    ss, sm, ts, tm = small_dataset(2, 3)
    batches = make_batches(ss, sm, ts, tm, 6, seeded_rng(1))
    txt_ids = [tid for b in batches for _, tid in b.pair_ids]
    # each speaker's single prompt appears once per utterance
    assert len(txt_ids) == 6
    assert len(set(txt_ids)) == 2


def test_make_batches_deterministic():
    ss, sm, ts, tm = small_dataset(5, 2)
    a = make_batches(ss, sm, ts, tm, 3, seeded_rng(7))
    b = make_batches(ss, sm, ts, tm, 3, seeded_rng(7))
    assert [x.pair_ids for x in a] == [x.pair_ids for x in b]


def test_make_batches_drops_short_tail():
    ss, sm, ts, tm = small_dataset(5, 1)
    batches = make_batches(ss, sm, ts, tm, 4, seeded_rng(0))
    assert [len(b.pair_ids) for b in batches] == [4]


def test_make_batches_needs_two_speakers():
    ss, sm, ts, tm = small_dataset(2, 1)
    sm.entries = sm.entries[:1]
    tm.entries = tm.entries[:1]
    with pytest.raises(ValueError):
        make_batches(ss, sm, ts, tm, 2, seeded_rng(0))


def _scalar_state(value=1.0):
    cfg = LinkerConfig(dim_speaker_in=2, dim_text_in=2, common_dim=2, n_transform_layers=1)
    params = init_params(cfg, 0)
    return TrainState(params)


def test_adam_zero_gradient_noop():
    state = _scalar_state()
    before = state.params.copy()
    grads = {n: np.zeros_like(t) for n, t in state.params.tensors.items()}
    adam_step(state, grads, lr=1e-3)
    assert state.step == 1
    for n in before.names():
        if n == "aam.W":
            continue
        assert np.array_equal(before.tensors[n], state.params.tensors[n])


def test_adam_first_step_is_lr_times_sign():
    state = _scalar_state()
    grads = {n: np.zeros_like(t) for n, t in state.params.tensors.items()}
    g = np.full_like(state.params.tensors["spk.proj.W"], 0.37)
    grads["spk.proj.W"] = g.copy()
    before = state.params.tensors["spk.proj.W"].copy()
    adam_step(state, grads, lr=1e-3)
    delta = state.params.tensors["spk.proj.W"] - before
    assert np.max(np.abs(delta + 1e-3 * np.sign(g))) < 1e-10


def test_adam_nonfinite_gradient_rejected():
    state = _scalar_state()
    grads = {n: np.zeros_like(t) for n, t in state.params.tensors.items()}
    grads["spk.proj.b"][0] = np.nan
    with pytest.raises(FloatingPointError, match="spk.proj.b"):
        adam_step(state, grads, lr=1e-3)


def test_adam_aam_rows_renormalized():
    cfg = LinkerConfig(dim_speaker_in=2, dim_text_in=2, common_dim=4,
                       n_transform_layers=1, n_speakers_train=3)
    state = TrainState(init_params(cfg, 1))
    grads = {n: np.zeros_like(t) for n, t in state.params.tensors.items()}
    grads["aam.W"] = np.ones_like(state.params.tensors["aam.W"])
    adam_step(state, grads, lr=0.1)
    norms = np.linalg.norm(state.params.tensors["aam.W"], axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-9


def test_train_zero_epochs_equals_init():
    ss, sm, ts, tm = small_dataset(4, 2)
    tc = TrainConfig(epochs=0, batch_size=4, seed=3)
    lc = LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12)
    params, log = train(tc, lc, ss, sm, ts, tm)
    ref = init_params(lc, 3)
    assert log == []
    for n in ref.names():
        assert np.array_equal(params.tensors[n], ref.tensors[n])


def test_train_loss_decreases_on_correlated_data():
    ss, sm, ts, tm = small_dataset(8, 3, seed=5, intra_speaker_noise=0.05,
                                   cross_modal_correlation=1.0)
    tc = TrainConfig(epochs=20, batch_size=8, seed=5)
    lc = LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=16)
    _, log = train(tc, lc, ss, sm, ts, tm)
    assert log[-1]["mean_loss"] < 0.5 * log[0]["mean_loss"]


def test_train_deterministic_logs_and_checkpoints(tmp_path):
    ss, sm, ts, tm = small_dataset(4, 2, seed=8)
    lc = lambda: LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12)
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        tc = TrainConfig(epochs=3, batch_size=4, seed=8)
        train(tc, lc(), ss, sm, ts, tm, out_dir=str(d))
        outs.append(d)
    for name in ("ckpt_final.bin", "ckpt_epoch_2.bin", "loss_log.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_train_all_modes_run(tmp_path):
    ss, sm, ts, tm = small_dataset(4, 2, seed=9)
    for mode in ("cts", "cts_spk", "cts_supcon"):
        tc = TrainConfig(loss_mode=mode, epochs=2, batch_size=4, seed=9)
        lc = LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12)
        params, log = train(tc, lc, ss, sm, ts, tm)
        assert len(log) == 2
        assert np.isfinite(log[-1]["mean_loss"])
        if mode == "cts_spk":
            assert "aam.W" in params.tensors
            assert "mean_aam" in log[-1]


def test_train_loss_log_written(tmp_path):
    ss, sm, ts, tm = small_dataset(4, 2, seed=10)
    tc = TrainConfig(epochs=2, batch_size=4, seed=10)
    lc = LinkerConfig(dim_speaker_in=8, dim_text_in=10, common_dim=12)
    train(tc, lc, ss, sm, ts, tm, out_dir=str(tmp_path))
    lines = (tmp_path / "loss_log.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["epoch"] == 0 and "mean_loss" in rec
    assert (tmp_path / "ckpt_epoch_0.bin").exists()
    loaded = load_checkpoint(tmp_path / "ckpt_final.bin")
    assert loaded.config.dim_speaker_in == 8


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(loss_mode="nope").validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1).validate()
    with pytest.raises(ValueError):
        TrainConfig(lam=-1).validate()


def test_grad_check_passes_at_default_tolerance():
    report = grad_check(seed=0, tolerance=1e-4)
    assert set(report) == {"info_nce", "cts_pair", "cts_total", "aam", "sup_cts_total"}
    for r in report.values():
        assert r["pass"]


def test_grad_check_impossible_tolerance_fails():
    report = grad_check(seed=0, tolerance=1e-12)
    assert any(not r["pass"] for r in report.values())
    assert all(r["max_rel_err"] > 0 for r in report.values())


def test_grad_check_deterministic():
    a = grad_check(seed=5)
    b = grad_check(seed=5)
    assert a == b
