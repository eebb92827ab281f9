/** Extraction jobs: run a named encoder over a list of inputs and emit
 * one EMB1 file plus its JSONL manifest, ready for the xmodal engine. */

import { writeEmb1, writeManifest, type ManifestEntry } from "./emb1.js";
import { audioEncoder, encodeAudio, encodeText, textEncoder } from "./encoders.js";
import { readWav } from "./wav.js";

export interface AudioInput {
  id: string;
  speaker: string;
  path: string;
}

export interface TextInput {
  id: string;
  speaker: string;
  text: string;
}

export interface ExtractionJob<I> {
  encoder: string;
  inputs: I[];
  outEmb: string;
  outManifest: string;
}

export interface ExtractionResult {
  dim: number;
  count: number;
}

export function extractSpeakerEmbeddings(job: ExtractionJob<AudioInput>): ExtractionResult {
  const spec = audioEncoder(job.encoder);
  const rows: Float32Array[] = [];
  const entries: ManifestEntry[] = [];
  for (const input of job.inputs) {
    const wav = readWav(input.path);
    rows.push(encodeAudio(wav.samples, wav.sampleRate, spec));
    entries.push({
      id: input.id,
      row: entries.length,
      speaker: input.speaker,
      modality: "speaker",
      encoder: spec.name,
      dim: spec.dim,
      pooling: "mean",
    });
  }
  writeEmb1(job.outEmb, rows, spec.dim);
  writeManifest(job.outManifest, entries);
  return { dim: spec.dim, count: rows.length };
}

export function extractTextEmbeddings(job: ExtractionJob<TextInput>): ExtractionResult {
  const spec = textEncoder(job.encoder);
  const rows: Float32Array[] = [];
  const entries: ManifestEntry[] = [];
  for (const input of job.inputs) {
    rows.push(encodeText(input.text, spec));
    entries.push({
      id: input.id,
      row: entries.length,
      speaker: input.speaker,
      modality: "text",
      text: input.text,
      encoder: spec.name,
      dim: spec.dim,
      pooling: "mean",
    });
  }
  writeEmb1(job.outEmb, rows, spec.dim);
  writeManifest(job.outManifest, entries);
  return { dim: spec.dim, count: rows.length };
}
