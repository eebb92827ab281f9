"""Command-line entry point. Subcommands cover dataset synthesis, training,
gradient checking, index building, retrieval, evaluation, the unlinked LDA
baseline, and a 2-D PCA dump for external plotting.

Exit codes: 0 success, 1 compute failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import embio, metrics, retrieval, trainer
from .embio import (EmbeddingSet, SynthSpec, gen_synthetic, read_embeddings,
                    read_manifest, write_embeddings, write_manifest)
from .model import LinkerConfig, load_checkpoint, project, save_checkpoint
from .numerics import seeded_rng


class UsageError(Exception):
    pass


SPK_EMB, SPK_MAN = "speaker.emb1", "speaker_manifest.jsonl"
TXT_EMB, TXT_MAN = "text.emb1", "text_manifest.jsonl"

TRAIN_CONFIG_KEYS = {
    "loss_mode", "batch_size", "epochs", "learning_rate", "lam", "seed", "shuffle",
    "common_dim", "n_transform_layers", "activation", "learnable_temperature",
    "init_temperature", "aam_margin", "aam_scale", "data_dir", "out_dir",
}


def _default_seed(value):
    if value is not None:
        return value
    return int(os.environ.get("XMODAL_SEED", "0"))


def _load_dataset(d):
    for name in (SPK_EMB, SPK_MAN, TXT_EMB, TXT_MAN):
        p = os.path.join(d, name)
        if not os.path.exists(p):
            raise UsageError(f"missing input file: {p}")
    return (read_embeddings(os.path.join(d, SPK_EMB)),
            read_manifest(os.path.join(d, SPK_MAN)),
            read_embeddings(os.path.join(d, TXT_EMB)),
            read_manifest(os.path.join(d, TXT_MAN)))


def cmd_gen_synth(args):
    if args.speakers < 2:
        raise UsageError("contrastive training needs at least 2 speakers")
    spec = SynthSpec(n_speakers=args.speakers, utts_per_speaker=args.utts,
                     dim_speaker=args.dim_speaker, dim_text=args.dim_text,
                     intra_speaker_noise=args.noise,
                     cross_modal_correlation=args.correlation,
                     seed=_default_seed(args.seed),
                     prompts_per_speaker=args.prompts)
    spk_set, spk_m, txt_set, txt_m = gen_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    write_embeddings(spk_set, os.path.join(args.out, SPK_EMB))
    write_manifest(spk_m, os.path.join(args.out, SPK_MAN))
    write_embeddings(txt_set, os.path.join(args.out, TXT_EMB))
    write_manifest(txt_m, os.path.join(args.out, TXT_MAN))
    report = embio.validate_pairing(spk_m, txt_m)
    print(json.dumps({"speakers": report.n_speakers, "utterances": report.n_utterances,
                      "prompts": report.n_prompts, "dim_speaker": spec.dim_speaker,
                      "dim_text": spec.dim_text, "out": args.out}, sort_keys=True))
    return 0


def cmd_train(args):
    cfg = {}
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"missing config file: {args.config}")
        with open(args.config) as f:
            cfg = json.load(f)
        unknown = set(cfg) - TRAIN_CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    overrides = {
        "loss_mode": args.loss, "lam": getattr(args, "lambda"), "epochs": args.epochs,
        "batch_size": args.batch, "learning_rate": args.lr, "seed": args.seed,
        "common_dim": args.common_dim, "n_transform_layers": args.layers,
        "data_dir": args.data, "out_dir": args.out,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    cfg.setdefault("seed", _default_seed(None))
    data_dir = cfg.pop("data_dir", None)
    out_dir = cfg.pop("out_dir", None)
    if data_dir is None or out_dir is None:
        raise UsageError("data_dir and out_dir are required (via config or flags)")
    spk_set, spk_m, txt_set, txt_m = _load_dataset(data_dir)

    linker_keys = {"common_dim", "n_transform_layers", "activation", "learnable_temperature",
                   "init_temperature", "aam_margin", "aam_scale"}
    linker_cfg = LinkerConfig(dim_speaker_in=spk_set.dim, dim_text_in=txt_set.dim,
                              **{k: cfg[k] for k in linker_keys if k in cfg})
    train_cfg = trainer.TrainConfig(**{k: v for k, v in cfg.items() if k not in linker_keys})
    os.makedirs(out_dir, exist_ok=True)
    params, log = trainer.train(train_cfg, linker_cfg, spk_set, spk_m, txt_set, txt_m,
                                out_dir=out_dir)
    effective = dict(cfg, data_dir=data_dir, out_dir=out_dir,
                     dim_speaker_in=spk_set.dim, dim_text_in=txt_set.dim)
    with open(os.path.join(out_dir, "train_config.json"), "w") as f:
        json.dump(effective, f, sort_keys=True, indent=2)
    print(json.dumps({"final_loss": log[-1]["mean_loss"] if log else None,
                      "epochs": len(log), "out": out_dir}, sort_keys=True))
    return 0


def cmd_grad_check(args):
    report = trainer.grad_check(seed=_default_seed(args.seed), tolerance=args.tolerance)
    ok = True
    for mode, r in report.items():
        status = "PASS" if r["pass"] else "FAIL"
        ok = ok and r["pass"]
        print(f"{status} {mode}: max relative error {r['max_rel_err']:.3e} "
              f"(tolerance {args.tolerance:g})")
    return 0 if ok else 1


def cmd_build_index(args):
    params = load_checkpoint(args.ckpt)
    emb = read_embeddings(args.emb)
    man = read_manifest(args.manifest)
    idx = retrieval.build_index(params, emb, man, args.modality)
    os.makedirs(args.out, exist_ok=True)
    write_embeddings(EmbeddingSet.from_matrix(np.asarray(idx.matrix, dtype=np.float32),
                                              ids=list(idx.ids)),
                     os.path.join(args.out, f"index_{args.modality}.emb1"))
    write_manifest(man, os.path.join(args.out, f"index_{args.modality}_manifest.jsonl"))
    print(json.dumps({"modality": args.modality, "rows": idx.size, "dim": idx.dim,
                      "out": args.out}, sort_keys=True))
    return 0


def _projected_indexes(params, data_dir):
    spk_set, spk_m, txt_set, txt_m = _load_dataset(data_dir)
    spk_idx = retrieval.build_index(params, spk_set, spk_m, "speaker")
    txt_idx = retrieval.build_index(params, txt_set, txt_m, "text")
    return spk_set, spk_m, txt_set, txt_m, spk_idx, txt_idx


def cmd_retrieve(args):
    params = load_checkpoint(args.ckpt)
    spk_set, spk_m, txt_set, txt_m, spk_idx, txt_idx = _projected_indexes(params, args.data)
    src_set, src_m, modality = ((spk_set, spk_m, "speaker") if args.direction == "s2t"
                                else (txt_set, txt_m, "text"))
    ids = [e.id for e in src_m.entries]
    if args.query_id not in ids:
        raise UsageError(f"query id {args.query_id!r} not found in {modality} manifest")
    entry = src_m.entries[ids.index(args.query_id)]
    q = project(params, src_set.data[entry.row][None, :], modality)[0]
    ranked = retrieval.retrieve(args.direction, q, spk_idx, txt_idx, mode=args.mode,
                                k_eval=args.k, fuse_n=args.fuse_n,
                                weighting=args.weighting, query_id=args.query_id)
    lines = [json.dumps({"query": ranked.query_id, "rank": r + 1, "id": cid, "score": s},
                        sort_keys=True) for r, (cid, s) in enumerate(ranked.items)]
    out = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(out)
    else:
        sys.stdout.write(out)
    return 0


def _print_report_table(report, label):
    cols = ["s2t_plain", "t2s_plain", "s2t_fused", "t2s_fused"]
    print(f"# {label}")
    print(f"{'condition':<12}{'mAP10':>8}{'MeanR':>8}")
    for c in cols:
        r = report.conditions[c]
        print(f"{c:<12}{r['map_at_k']:>8.2f}{r['mean_rank']:>8.2f}")


def _write_report(report, path, extra):
    doc = json.loads(report.to_json())
    doc.update(extra)
    text = json.dumps(doc, sort_keys=True, indent=2)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    return doc


def cmd_evaluate(args):
    params = load_checkpoint(args.ckpt)
    spk_set, spk_m, txt_set, txt_m = _load_dataset(args.eval)
    report = metrics.evaluate(params, spk_set, spk_m, txt_set, txt_m,
                              k=args.k, fuse_n=args.fuse_n, weighting=args.weighting)
    doc = _write_report(report, args.out, {
        "mode": "linked", "ckpt": args.ckpt, "eval": args.eval,
        "weighting": args.weighting})
    if not args.out:
        print(json.dumps(doc, sort_keys=True, indent=2))
    _print_report_table(report, "linked")
    return 0


def cmd_baseline_unlinked(args):
    spk_set, spk_m, txt_set, txt_m = _load_dataset(args.eval)
    labels = np.array([e.speaker for e in txt_m.entries])
    txt_rows = txt_set.data[[e.row for e in txt_m.entries]].astype(np.float64)
    spk_rows = spk_set.data[[e.row for e in spk_m.entries]].astype(np.float64)
    proj = retrieval.lda_fit(txt_rows, labels, target_dim=spk_set.dim,
                             shrinkage=args.shrinkage)
    aligned_txt = retrieval.lda_apply(proj, txt_rows)
    report = metrics.evaluate_embeddings(spk_rows, spk_m, aligned_txt, txt_m,
                                         k=args.k, fuse_n=args.fuse_n,
                                         weighting=args.weighting)
    doc = _write_report(report, args.out, {
        "mode": "unlinked", "eval": args.eval, "lda_shrinkage": args.shrinkage,
        "weighting": args.weighting})
    if not args.out:
        print(json.dumps(doc, sort_keys=True, indent=2))
    _print_report_table(report, "unlinked")
    return 0


def cmd_export_2d(args):
    emb = read_embeddings(args.emb)
    x = emb.data.astype(np.float64)
    x = x - x.mean(axis=0)
    # PCA via eigendecomposition of the covariance
    cov = (x.T @ x) / max(1, x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    basis = evecs[:, ::-1][:, :2]
    pts = x @ basis
    ids = emb.ids
    if args.manifest:
        man = read_manifest(args.manifest)
        speakers = {e.id: e.speaker for e in man.entries}
        ids = [e.id for e in man.entries]
        pts = (emb.data[[e.row for e in man.entries]].astype(np.float64) - emb.data.mean(axis=0)) @ basis
    else:
        speakers = {}
    with open(args.out, "w") as f:
        for i, rid in enumerate(ids):
            rec = {"id": rid, "x": float(pts[i, 0]), "y": float(pts[i, 1])}
            if rid in speakers:
                rec["speaker"] = speakers[rid]
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(json.dumps({"rows": len(ids), "out": args.out}, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="xmodal",
                                description="Cross-modal speaker/text linking and retrieval engine")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a deterministic synthetic paired dataset")
    g.add_argument("--speakers", type=int, required=True)
    g.add_argument("--utts", type=int, default=1)
    g.add_argument("--prompts", type=int, default=1)
    g.add_argument("--dim-speaker", type=int, default=192)
    g.add_argument("--dim-text", type=int, default=768)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--correlation", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train the linking heads")
    t.add_argument("--config", default=None)
    t.add_argument("--loss", choices=trainer.LOSS_MODES, default=None)
    t.add_argument("--lambda", dest="lambda", type=float, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--common-dim", type=int, default=None)
    t.add_argument("--layers", type=int, default=None)
    t.add_argument("--data", default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("grad-check", help="verify analytic gradients against finite differences")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.set_defaults(func=cmd_grad_check)

    b = sub.add_parser("build-index", help="build and persist a search index")
    b.add_argument("--ckpt", required=True)
    b.add_argument("--emb", required=True)
    b.add_argument("--manifest", required=True)
    b.add_argument("--modality", choices=("speaker", "text"), required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_index)

    r = sub.add_parser("retrieve", help="rank the other modality for one query")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--direction", choices=("s2t", "t2s"), required=True)
    r.add_argument("--mode", choices=("plain", "fused"), default="plain")
    r.add_argument("--query-id", required=True)
    r.add_argument("--k", type=int, default=10)
    r.add_argument("--fuse-n", type=int, default=10)
    r.add_argument("--weighting", choices=("uniform", "similarity"), default="uniform")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_retrieve)

    e = sub.add_parser("evaluate", help="four-condition retrieval evaluation")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--eval", required=True)
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--fuse-n", type=int, default=10)
    e.add_argument("--weighting", choices=("uniform", "similarity"), default="uniform")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    u = sub.add_parser("baseline-unlinked", help="LDA-aligned raw-embedding baseline")
    u.add_argument("--eval", required=True)
    u.add_argument("--shrinkage", type=float, default=0.1)
    u.add_argument("--k", type=int, default=10)
    u.add_argument("--fuse-n", type=int, default=10)
    u.add_argument("--weighting", choices=("uniform", "similarity"), default="uniform")
    u.add_argument("--out", default=None)
    u.set_defaults(func=cmd_baseline_unlinked)

    x = sub.add_parser("export-2d", help="PCA 2-D dump of an embedding file for plotting")
    x.add_argument("--emb", required=True)
    x.add_argument("--manifest", default=None)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_2d)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, embio.FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # compute failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
