export { MAGIC, VERSION, Emb1FormatError, encodeEmb1, writeEmb1, decodeEmb1, readEmb1, writeManifest } from "./emb1.js";
export type { Emb1File, ManifestEntry } from "./emb1.js";
export { WavError, decodeWav, readWav, encodeWavPcm16, writeWavPcm16 } from "./wav.js";
export type { WavData } from "./wav.js";
export { resampleLinear, hannWindow, fft, framePowerSpectrum } from "./dsp.js";
export {
  EncoderUnavailableError,
  AUDIO_ENCODERS,
  TEXT_ENCODERS,
  audioEncoder,
  textEncoder,
  encodeAudio,
  encodeText,
} from "./encoders.js";
export type { AudioEncoderSpec, TextEncoderSpec } from "./encoders.js";
export { MissingSlotError, templateSlots, buildPrompts } from "./prompts.js";
export { extractSpeakerEmbeddings, extractTextEmbeddings } from "./extract.js";
export type { AudioInput, TextInput, ExtractionJob, ExtractionResult } from "./extract.js";
