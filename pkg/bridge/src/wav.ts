/** Minimal RIFF/WAVE PCM16 reader and writer. Multi-channel input is
 * mixed down by taking the first channel. */

import { readFileSync, writeFileSync } from "node:fs";

export class WavError extends Error {}

export interface WavData {
  sampleRate: number;
  samples: Float64Array; // first channel, scaled to [-1, 1)
}

export function decodeWav(buf: Buffer): WavData {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new WavError("not a RIFF/WAVE file");
  }
  let off = 12;
  let sampleRate = 0;
  let channels = 0;
  let bitsPerSample = 0;
  let data: Buffer | null = null;
  while (off + 8 <= buf.length) {
    const chunkId = buf.toString("ascii", off, off + 4);
    const chunkSize = buf.readUInt32LE(off + 4);
    const body = buf.subarray(off + 8, off + 8 + chunkSize);
    if (chunkId === "fmt ") {
      const format = body.readUInt16LE(0);
      if (format !== 1) throw new WavError(`unsupported WAV format tag ${format}; only PCM is handled`);
      channels = body.readUInt16LE(2);
      sampleRate = body.readUInt32LE(4);
      bitsPerSample = body.readUInt16LE(14);
      if (bitsPerSample !== 16) throw new WavError(`unsupported bit depth ${bitsPerSample}; only 16-bit PCM is handled`);
    } else if (chunkId === "data") {
      data = Buffer.from(body);
    }
    off += 8 + chunkSize + (chunkSize % 2);
  }
  if (sampleRate === 0 || data === null) throw new WavError("missing fmt or data chunk");
  const frameBytes = channels * 2;
  const n = Math.floor(data.length / frameBytes);
  if (n === 0) throw new WavError("empty audio data");
  const samples = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    samples[i] = data.readInt16LE(i * frameBytes) / 32768;
  }
  return { sampleRate, samples };
}

export function readWav(path: string): WavData {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (err) {
    throw new WavError(`unreadable audio file ${path}: ${(err as Error).message}`);
  }
  return decodeWav(buf);
}

export function encodeWavPcm16(samples: Float64Array | number[], sampleRate: number): Buffer {
  const n = samples.length;
  const buf = Buffer.alloc(44 + n * 2);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + n * 2, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(1, 22); // mono
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(n * 2, 40);
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, samples[i] as number));
    buf.writeInt16LE(Math.round(v * 32767), 44 + i * 2);
  }
  return buf;
}

export function writeWavPcm16(path: string, samples: Float64Array | number[], sampleRate: number): void {
  writeFileSync(path, encodeWavPcm16(samples, sampleRate));
}
