/** Deterministic audio fixture: each speaker gets a distinct harmonic
 * stack plus low-level LCG noise, so stand-in spectral embeddings cluster
 * by speaker. */

export function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state / 0x100000000;
  };
}

export function synthUtterance(
  speakerIndex: number,
  utranceIndex: number,
  sampleRate = 16000,
  seconds = 0.4
): Float64Array {
  const n = Math.round(sampleRate * seconds);
  const rand = lcg(1 + speakerIndex * 1000 + utranceIndex);
  const f0 = 110 + 60 * speakerIndex;
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const t = i / sampleRate;
    let v = 0;
    for (let h = 1; h <= 4; h++) {
      v += Math.sin(2 * Math.PI * f0 * h * t + speakerIndex * h) / h;
    }
    out[i] = 0.3 * v + 0.02 * (rand() * 2 - 1);
  }
  return out;
}
