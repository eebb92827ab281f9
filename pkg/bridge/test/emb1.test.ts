import { describe, expect, it } from "vitest";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
  Emb1FormatError,
  decodeEmb1,
  encodeEmb1,
  writeEmb1,
  writeManifest,
  type ManifestEntry,
} from "../src/emb1.js";

describe("EMB1 encoding", () => {
  it("writes the documented header byte-for-byte", () => {
    const buf = encodeEmb1([new Float32Array([1, 2, 3])], 3);
    expect(buf.subarray(0, 4).toString("ascii")).toBe("EMB1");
    expect(buf.readUInt16LE(4)).toBe(1); // version
    expect(buf.readUInt32LE(6)).toBe(3); // dim
    expect(Number(buf.readBigUInt64LE(10))).toBe(1); // count
    expect(buf.length).toBe(18 + 3 * 4);
    expect(buf.readFloatLE(18)).toBe(1);
    expect(buf.readFloatLE(26)).toBe(3);
  });

  it("round-trips rows exactly", () => {
    const rows = [new Float32Array([0.5, -0.25]), new Float32Array([1e-7, 42])];
    const parsed = decodeEmb1(encodeEmb1(rows, 2));
    expect(parsed.dim).toBe(2);
    expect(parsed.count).toBe(2);
    expect(Array.from(parsed.rows[0])).toEqual(Array.from(rows[0]));
    expect(Array.from(parsed.rows[1])).toEqual(Array.from(rows[1]));
  });

  it("rejects empty sets, shape mismatches and non-finite values", () => {
    expect(() => encodeEmb1([], 4)).toThrow(Emb1FormatError);
    expect(() => encodeEmb1([new Float32Array(3)], 4)).toThrow(/length 3/);
    expect(() => encodeEmb1([new Float32Array([NaN])], 1)).toThrow(/non-finite/);
  });

  it("rejects corrupted files on read", () => {
    const buf = encodeEmb1([new Float32Array([1, 2])], 2);
    expect(() => decodeEmb1(buf.subarray(0, 10))).toThrow(Emb1FormatError);
    const wrongMagic = Buffer.from(buf);
    wrongMagic.write("NOPE", 0, "ascii");
    expect(() => decodeEmb1(wrongMagic)).toThrow(/not an EMB1/);
    expect(() => decodeEmb1(buf.subarray(0, buf.length - 4))).toThrow(/truncated payload/);
  });

  it("writes one JSON object per manifest line and rejects duplicate ids", () => {
    const dir = mkdtempSync(join(tmpdir(), "emb1-"));
    const entries: ManifestEntry[] = [
      { id: "a", row: 0, speaker: "spk0", modality: "speaker", encoder: "ecapa-tdnn", dim: 192, pooling: "mean" },
      { id: "b", row: 1, speaker: "spk1", modality: "speaker" },
    ];
    const path = join(dir, "m.jsonl");
    writeManifest(path, entries);
    const lines = readFileSync(path, "utf-8").trim().split("\n");
    expect(lines).toHaveLength(2);
    expect(JSON.parse(lines[0])).toMatchObject({ id: "a", row: 0, modality: "speaker", pooling: "mean" });
    expect(() => writeManifest(path, [entries[0], { ...entries[1], id: "a" }])).toThrow(/duplicate id/);
  });

  it("writeEmb1 persists to disk identically to encodeEmb1", () => {
    const dir = mkdtempSync(join(tmpdir(), "emb1-"));
    const rows = [new Float32Array([9, 8, 7])];
    const path = join(dir, "x.emb1");
    writeEmb1(path, rows, 3);
    expect(readFileSync(path).equals(encodeEmb1(rows, 3))).toBe(true);
  });
});
