"""On-disk embedding format (EMB1), JSONL manifests, pairing validation and
the deterministic synthetic dataset generator.

EMB1 layout (little-endian): magic "EMB1", u16 version=1, u32 dim,
u64 count, then count*dim float32 values row-major. Identity metadata
lives in the manifest sidecar, not in the binary file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import l2_normalize, seeded_rng

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")


class FormatError(ValueError):
    pass


def default_ids(count):
    return [f"{i:06d}" for i in range(count)]


@dataclass
class EmbeddingSet:
    dim: int
    count: int
    data: np.ndarray  # count x dim float32
    ids: list = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32).reshape(self.count, self.dim)
        if self.ids is None:
            self.ids = default_ids(self.count)
        if len(self.ids) != self.count:
            raise ValueError("ids length must equal count")
        if len(set(self.ids)) != self.count:
            raise ValueError("ids must be unique")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("embedding data contains non-finite values")

    @classmethod
    def from_matrix(cls, data, ids=None):
        data = np.asarray(data, dtype=np.float32)
        return cls(dim=data.shape[1], count=data.shape[0], data=data, ids=ids)


@dataclass
class ManifestEntry:
    id: str
    row: int
    speaker: str
    modality: str  # "speaker" | "text"
    text: str = None

    def to_json(self):
        d = {"id": self.id, "row": self.row, "speaker": self.speaker, "modality": self.modality}
        if self.text is not None:
            d["text"] = self.text
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    def validate(self, emb_set=None):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ValueError(f"duplicate id in manifest: {e.id}")
            seen.add(e.id)
            if e.modality not in ("speaker", "text"):
                raise ValueError(f"bad modality {e.modality!r} for id {e.id}")
            if e.row < 0:
                raise ValueError(f"negative row for id {e.id}")
            if emb_set is not None and e.row >= emb_set.count:
                raise ValueError(f"row {e.row} out of range for id {e.id}")
        return self

    def speakers(self):
        return sorted({e.speaker for e in self.entries})


def write_embeddings(emb_set, path):
    if emb_set.count == 0 or emb_set.dim == 0:
        raise ValueError("empty set")
    payload = np.ascontiguousarray(emb_set.data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, emb_set.dim, emb_set.count))
        f.write(payload.tobytes())


def read_embeddings(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError("not an EMB1 file")
    if version != VERSION:
        raise FormatError(f"unsupported EMB1 version {version}")
    expected = count * dim * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise FormatError("truncated payload")
    data = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(data)):
        raise FormatError("NaN or Inf in payload")
    return EmbeddingSet(dim=int(dim), count=int(count), data=data.copy())


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as f:
        for e in manifest.entries:
            f.write(e.to_json() + "\n")


def read_manifest(path):
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            entries.append(ManifestEntry(id=d["id"], row=int(d["row"]), speaker=d["speaker"],
                                         modality=d["modality"], text=d.get("text")))
    return Manifest(entries).validate()


@dataclass
class PairingReport:
    n_speakers: int
    n_utterances: int
    n_prompts: int
    utts_per_speaker: dict
    prompts_per_speaker: dict
    missing_speaker_side: list  # speakers present only in the text manifest
    missing_text_side: list     # speakers present only in the speaker manifest

    @property
    def complete(self):
        return not self.missing_speaker_side and not self.missing_text_side


def validate_pairing(speaker_manifest, text_manifest):
    """Check that every speaker has rows on both sides; pairing is the
    supervision signal, so incompleteness is reported rather than raised."""
    speaker_manifest.validate()
    text_manifest.validate()
    spk_ids = {e.id for e in speaker_manifest.entries}
    for e in text_manifest.entries:
        if e.id in spk_ids:
            raise ValueError(f"duplicate id across manifests: {e.id}")
    utts = {}
    for e in speaker_manifest.entries:
        utts[e.speaker] = utts.get(e.speaker, 0) + 1
    prompts = {}
    for e in text_manifest.entries:
        prompts[e.speaker] = prompts.get(e.speaker, 0) + 1
    spk_side = set(utts)
    txt_side = set(prompts)
    return PairingReport(
        n_speakers=len(spk_side | txt_side),
        n_utterances=sum(utts.values()),
        n_prompts=sum(prompts.values()),
        utts_per_speaker=utts,
        prompts_per_speaker=prompts,
        missing_speaker_side=sorted(txt_side - spk_side),
        missing_text_side=sorted(spk_side - txt_side),
    )


@dataclass
class SynthSpec:
    n_speakers: int
    utts_per_speaker: int
    dim_speaker: int
    dim_text: int
    intra_speaker_noise: float = 0.05
    cross_modal_correlation: float = 1.0
    seed: int = 0
    prompts_per_speaker: int = 1

    def validate(self):
        if self.n_speakers < 1 or self.utts_per_speaker < 1 or self.prompts_per_speaker < 1:
            raise ValueError("counts must be positive")
        if self.dim_speaker < 1 or self.dim_text < 1:
            raise ValueError("dims must be positive")
        if self.intra_speaker_noise < 0:
            raise ValueError("noise must be non-negative")
        if not (0.0 <= self.cross_modal_correlation <= 1.0):
            raise ValueError("cross_modal_correlation must be in [0,1]")
        return self


_PROMPT_TEMPLATE = "a synthetic speaker with voice code {code} and register {register}"


def gen_synthetic(spec):
    """Deterministic synthetic paired dataset.

    Per speaker k a latent unit vector z_k is drawn. Speaker rows are
    normalize(P_s z_k + noise * eps); text rows are
    normalize(c * P_t z_k + (1 - c) * u) with u an independent draw and
    c the cross-modal correlation. P_s and P_t are fixed seeded random
    linear maps. Bit-identical output for identical specs.
    """
    spec.validate()
    latent_dim = min(spec.dim_speaker, spec.dim_text, 32)
    rng = seeded_rng(spec.seed)
    proj_s = rng.standard_normal((latent_dim, spec.dim_speaker))
    proj_t = rng.standard_normal((latent_dim, spec.dim_text))

    spk_rows, spk_entries = [], []
    txt_rows, txt_entries = [], []
    for k in range(spec.n_speakers):
        label = f"spk{k:04d}"
        z = l2_normalize(rng.standard_normal(latent_dim))
        base_s = z @ proj_s
        for u in range(spec.utts_per_speaker):
            eps = rng.standard_normal(spec.dim_speaker)
            row = l2_normalize(base_s + spec.intra_speaker_noise * eps)
            spk_entries.append(ManifestEntry(id=f"{label}_utt{u:03d}", row=len(spk_rows),
                                             speaker=label, modality="speaker"))
            spk_rows.append(row)
        base_t = z @ proj_t
        c = spec.cross_modal_correlation
        for p in range(spec.prompts_per_speaker):
            indep = rng.standard_normal(spec.dim_text)
            row = l2_normalize(c * base_t + (1.0 - c) * indep)
            prompt = _PROMPT_TEMPLATE.format(code=f"{k:04d}-{p}", register=k % 5)
            txt_entries.append(ManifestEntry(id=f"{label}_txt{p:03d}", row=len(txt_rows),
                                             speaker=label, modality="text", text=prompt))
            txt_rows.append(row)

    spk_set = EmbeddingSet.from_matrix(np.array(spk_rows, dtype=np.float32),
                                       ids=[e.id for e in spk_entries])
    txt_set = EmbeddingSet.from_matrix(np.array(txt_rows, dtype=np.float32),
                                       ids=[e.id for e in txt_entries])
    return spk_set, Manifest(spk_entries).validate(spk_set), txt_set, Manifest(txt_entries).validate(txt_set)
