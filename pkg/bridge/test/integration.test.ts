/**
 * Cross-component round trip: embeddings exported by this bridge must load
 * in the xmodal engine, pass its pairing validation, and support a full
 * train + evaluate run on a 5-speaker audio fixture.
 */

import { beforeAll, describe, expect, it } from "vitest";
import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, mkdirSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { extractSpeakerEmbeddings, extractTextEmbeddings, type AudioInput, type TextInput } from "../src/extract.js";
import { buildPrompts } from "../src/prompts.js";
import { writeWavPcm16 } from "../src/wav.js";
import { synthUtterance } from "./fixtures.js";

const N_SPEAKERS = 5;
const UTTS_PER_SPEAKER = 3;

function python(code: string): string {
  return execFileSync("python3", ["-c", code], { encoding: "utf-8" });
}

function xmodal(args: string[]): string {
  const code = "import sys; from xmodal.cli import main; sys.exit(main(sys.argv[1:]))";
  return execFileSync("python3", ["-c", code, ...args], { encoding: "utf-8" });
}

let dataDir: string;

beforeAll(() => {
  dataDir = mkdtempSync(join(tmpdir(), "bridge-rt-"));
  const wavDir = join(dataDir, "wav");
  mkdirSync(wavDir);

  const audioInputs: AudioInput[] = [];
  for (let s = 0; s < N_SPEAKERS; s++) {
    for (let u = 0; u < UTTS_PER_SPEAKER; u++) {
      const path = join(wavDir, `spk${s}_utt${u}.wav`);
      writeWavPcm16(path, synthUtterance(s, u), 16000);
      audioInputs.push({ id: `spk${s}_utt${u}`, speaker: `spk${s}`, path });
    }
  }
  extractSpeakerEmbeddings({
    encoder: "ecapa-tdnn",
    inputs: audioInputs,
    outEmb: join(dataDir, "speaker.emb1"),
    outManifest: join(dataDir, "speaker_manifest.jsonl"),
  });

  const metadata = Array.from({ length: N_SPEAKERS }, (_, s) => ({
    gender: s % 2 === 0 ? "male" : "female",
    pitch: ["low", "high", "medium", "deep", "bright"][s],
    country: `country${s}`,
  }));
  const prompts = buildPrompts(metadata, "a [gender] speaker with a [pitch] voice from [country]");
  const textInputs: TextInput[] = prompts.map((text, s) => ({
    id: `prompt_spk${s}`,
    speaker: `spk${s}`,
    text,
  }));
  extractTextEmbeddings({
    encoder: "bert-base-uncased",
    inputs: textInputs,
    outEmb: join(dataDir, "text.emb1"),
    outManifest: join(dataDir, "text_manifest.jsonl"),
  });
});

describe("bridge to engine round trip", () => {
  it("emitted EMB1 files load through the engine's reader with the right shapes", () => {
    const out = python(`
import json, os
from xmodal.embio import read_embeddings
d = ${JSON.stringify(dataDir)}
spk = read_embeddings(os.path.join(d, "speaker.emb1"))
txt = read_embeddings(os.path.join(d, "text.emb1"))
print(json.dumps({"spk": [spk.count, spk.dim], "txt": [txt.count, txt.dim]}))
`);
    const shapes = JSON.parse(out.trim());
    expect(shapes.spk).toEqual([N_SPEAKERS * UTTS_PER_SPEAKER, 192]);
    expect(shapes.txt).toEqual([N_SPEAKERS, 768]);
  });

  it("manifests pass the engine's pairing validation as complete", () => {
    const out = python(`
import json, os
from xmodal.embio import read_manifest, validate_pairing
d = ${JSON.stringify(dataDir)}
report = validate_pairing(read_manifest(os.path.join(d, "speaker_manifest.jsonl")),
                          read_manifest(os.path.join(d, "text_manifest.jsonl")))
print(json.dumps({"complete": report.complete, "n_speakers": report.n_speakers,
                  "n_utterances": report.n_utterances, "n_prompts": report.n_prompts}))
`);
    const report = JSON.parse(out.trim());
    expect(report.complete).toBe(true);
    expect(report.n_speakers).toBe(N_SPEAKERS);
    expect(report.n_utterances).toBe(N_SPEAKERS * UTTS_PER_SPEAKER);
    expect(report.n_prompts).toBe(N_SPEAKERS);
  });

  it("a full train + evaluate run completes on the fixture", () => {
    const runDir = join(dataDir, "run");
    xmodal([
      "train", "--data", dataDir, "--out", runDir,
      "--loss", "cts", "--epochs", "5", "--batch", "4",
      "--common-dim", "16", "--layers", "1", "--seed", "11",
    ]);
    expect(existsSync(join(runDir, "ckpt_final.bin"))).toBe(true);

    const reportPath = join(dataDir, "report.json");
    xmodal([
      "evaluate", "--ckpt", join(runDir, "ckpt_final.bin"),
      "--eval", dataDir, "--fuse-n", "10", "--out", reportPath,
    ]);
    const report = JSON.parse(readFileSync(reportPath, "utf-8"));
    expect(report.mode).toBe("linked");
    const conditions = Object.keys(report.conditions ?? report);
    expect(conditions.length).toBeGreaterThanOrEqual(4);
  }, 120000);
});
