/** Deterministic slot-filling of prompt templates from metadata rows.
 * Templates mark slots with square brackets, e.g.
 * "a [gender] speaker from [country]". Paraphrasing or re-segmentation of
 * the filled prompts is an external step, not performed here. */

export class MissingSlotError extends Error {
  constructor(public readonly missing: string[], rowIndex: number) {
    super(`metadata row ${rowIndex} is missing slot value(s): ${missing.join(", ")}`);
  }
}

const SLOT_RE = /\[([A-Za-z0-9_]+)\]/g;

export function templateSlots(template: string): string[] {
  const slots: string[] = [];
  for (const m of template.matchAll(SLOT_RE)) {
    if (!slots.includes(m[1])) slots.push(m[1]);
  }
  return slots;
}

export function buildPrompts(metadata: Record<string, string>[], template: string): string[] {
  const slots = templateSlots(template);
  return metadata.map((row, i) => {
    const missing = slots.filter((s) => row[s] === undefined || row[s] === "").sort();
    if (missing.length > 0) throw new MissingSlotError(missing, i);
    return template.replace(SLOT_RE, (_, slot: string) => row[slot]);
  });
}
