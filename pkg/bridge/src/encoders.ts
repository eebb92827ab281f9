/**
 * Named encoder registry. The production encoder checkpoints (ECAPA-TDNN,
 * PANN, Wav2Vec2.0 for audio; BERT/BART variants for text) cannot be
 * downloaded in this environment, so each name is backed by a deterministic
 * stand-in that reproduces the real encoder's output dimensionality, input
 * sample rate and pooling: log-power spectral features mean-pooled over
 * frames for audio, hashed character n-gram features for text. Requesting
 * a name without a stand-in fails loudly.
 */

import { framePowerSpectrum, hannWindow, resampleLinear } from "./dsp.js";

export class EncoderUnavailableError extends Error {}

export interface AudioEncoderSpec {
  name: string;
  dim: number;
  sampleRate: number;
  fftSize: number;
}

export interface TextEncoderSpec {
  name: string;
  dim: number;
}

export const AUDIO_ENCODERS: Record<string, AudioEncoderSpec> = {
  "ecapa-tdnn": { name: "ecapa-tdnn", dim: 192, sampleRate: 16000, fftSize: 1024 },
  pann: { name: "pann", dim: 2048, sampleRate: 32000, fftSize: 4096 },
  "wav2vec2.0": { name: "wav2vec2.0", dim: 512, sampleRate: 16000, fftSize: 2048 },
};

export const TEXT_ENCODERS: Record<string, TextEncoderSpec> = {
  "bert-base-uncased": { name: "bert-base-uncased", dim: 768 },
  "bert-japanese": { name: "bert-japanese", dim: 1024 },
};

export function audioEncoder(name: string): AudioEncoderSpec {
  const spec = AUDIO_ENCODERS[name];
  if (!spec) {
    throw new EncoderUnavailableError(
      `audio encoder "${name}" is not available; choose one of: ${Object.keys(AUDIO_ENCODERS).join(", ")}`
    );
  }
  return spec;
}

export function textEncoder(name: string): TextEncoderSpec {
  const spec = TEXT_ENCODERS[name];
  if (!spec) {
    throw new EncoderUnavailableError(
      `text encoder "${name}" is not available; choose one of: ${Object.keys(TEXT_ENCODERS).join(", ")}`
    );
  }
  return spec;
}

/** Resample to the encoder's rate, frame (hop = fftSize/2), take log-power
 * spectra, average the first `dim` bins over frames (mean pooling). */
export function encodeAudio(samples: Float64Array, sampleRate: number, spec: AudioEncoderSpec): Float32Array {
  const x = resampleLinear(samples, sampleRate, spec.sampleRate);
  const { fftSize, dim } = spec;
  const nBins = fftSize / 2 + 1;
  if (nBins < dim) throw new Error(`fftSize ${fftSize} yields ${nBins} bins < dim ${dim}`);
  const window = hannWindow(fftSize);
  const hop = fftSize / 2;
  const acc = new Float64Array(dim);
  let frames = 0;
  for (let start = 0; start === 0 || start + fftSize <= x.length; start += hop) {
    const frame = x.subarray(start, start + fftSize);
    const power = framePowerSpectrum(frame.length === fftSize ? frame : padTo(frame, fftSize), window);
    for (let j = 0; j < dim; j++) acc[j] += Math.log1p(power[j]);
    frames += 1;
  }
  const out = new Float32Array(dim);
  for (let j = 0; j < dim; j++) out[j] = acc[j] / frames;
  return out;
}

function padTo(frame: Float64Array, size: number): Float64Array {
  const out = new Float64Array(size);
  out.set(frame);
  return out;
}

function fnv1a(text: string, seed: number): number {
  let h = (0x811c9dc5 ^ seed) >>> 0;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h;
}

/** Signed hashed character n-grams (n = 1..3) scattered over `dim`
 * buckets, then tanh-compressed; stands in for a sentence encoder while
 * remaining deterministic and text-sensitive. */
export function encodeText(text: string, spec: TextEncoderSpec): Float32Array {
  const acc = new Float64Array(spec.dim);
  const padded = `^${text}$`;
  for (let n = 1; n <= 3; n++) {
    for (let i = 0; i + n <= padded.length; i++) {
      const gram = padded.slice(i, i + n);
      const bucket = fnv1a(gram, n) % spec.dim;
      const sign = fnv1a(gram, 101 + n) % 2 === 0 ? 1 : -1;
      acc[bucket] += sign / n;
    }
  }
  const out = new Float32Array(spec.dim);
  for (let j = 0; j < spec.dim; j++) out[j] = Math.tanh(acc[j] / 4);
  return out;
}
