/**
 * EMB1 binary embedding container, byte-compatible with the xmodal engine.
 *
 * Layout (little-endian): magic "EMB1", u16 version = 1, u32 dim,
 * u64 count, then count * dim float32 values row-major. Identity metadata
 * lives in the JSONL manifest sidecar, not in the binary file.
 */

import { writeFileSync, readFileSync } from "node:fs";

export const MAGIC = "EMB1";
export const VERSION = 1;
const HEADER_SIZE = 4 + 2 + 4 + 8;

export class Emb1FormatError extends Error {}

export function encodeEmb1(rows: Float32Array[], dim: number): Buffer {
  if (rows.length === 0 || dim === 0) {
    throw new Emb1FormatError("refusing to write an empty embedding set");
  }
  for (const [i, row] of rows.entries()) {
    if (row.length !== dim) {
      throw new Emb1FormatError(`row ${i} has length ${row.length}, expected ${dim}`);
    }
    for (const v of row) {
      if (!Number.isFinite(v)) {
        throw new Emb1FormatError(`row ${i} contains a non-finite value`);
      }
    }
  }
  const buf = Buffer.alloc(HEADER_SIZE + rows.length * dim * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt32LE(dim, 6);
  buf.writeBigUInt64LE(BigInt(rows.length), 10);
  let off = HEADER_SIZE;
  for (const row of rows) {
    for (const v of row) {
      buf.writeFloatLE(v, off);
      off += 4;
    }
  }
  return buf;
}

export function writeEmb1(path: string, rows: Float32Array[], dim: number): void {
  writeFileSync(path, encodeEmb1(rows, dim));
}

export interface Emb1File {
  dim: number;
  count: number;
  rows: Float32Array[];
}

export function decodeEmb1(buf: Buffer): Emb1File {
  if (buf.length < HEADER_SIZE) throw new Emb1FormatError("truncated header");
  if (buf.toString("ascii", 0, 4) !== MAGIC) throw new Emb1FormatError("not an EMB1 file");
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) throw new Emb1FormatError(`unsupported EMB1 version ${version}`);
  const dim = buf.readUInt32LE(6);
  const count = Number(buf.readBigUInt64LE(10));
  if (buf.length !== HEADER_SIZE + count * dim * 4) throw new Emb1FormatError("truncated payload");
  const rows: Float32Array[] = [];
  let off = HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      row[j] = buf.readFloatLE(off);
      off += 4;
    }
    rows.push(row);
  }
  return { dim, count, rows };
}

export function readEmb1(path: string): Emb1File {
  return decodeEmb1(readFileSync(path));
}

/** One JSONL manifest line; extra keys beyond the engine's required set
 * (id, row, speaker, modality, text) record extraction provenance. */
export interface ManifestEntry {
  id: string;
  row: number;
  speaker: string;
  modality: "speaker" | "text";
  text?: string;
  encoder?: string;
  dim?: number;
  pooling?: string;
}

export function writeManifest(path: string, entries: ManifestEntry[]): void {
  const seen = new Set<string>();
  for (const e of entries) {
    if (seen.has(e.id)) throw new Emb1FormatError(`duplicate id in manifest: ${e.id}`);
    seen.add(e.id);
  }
  const lines = entries.map((e) => {
    const ordered: Record<string, unknown> = {};
    for (const k of Object.keys(e).sort()) {
      const v = (e as unknown as Record<string, unknown>)[k];
      if (v !== undefined) ordered[k] = v;
    }
    return JSON.stringify(ordered);
  });
  writeFileSync(path, lines.join("\n") + "\n");
}
