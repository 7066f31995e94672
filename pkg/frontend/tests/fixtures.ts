/** Test fixtures mirrored from the server test suite: one story whose
 *  "garden path" model scores below the gate threshold. */

export const STORY_TITLE = "Goldilocks and the Three Bears";

export const STORY_BODY =
  "Once upon a time, Goldilocks skipped along the garden path that wound through " +
  "the woods until she reached a tidy little cottage. Nobody answered her knock, " +
  "so she pushed the door and stepped inside. On the table waited three bowls of " +
  "porridge. The first was too hot, the second too cold, but the third was just " +
  "right, and she ate it all up. Feeling heavy, she tried a great big chair, then " +
  "a middling chair, then a tiny chair that cracked beneath her. Upstairs she " +
  "found a soft bed and fell fast asleep. Soon Papa Bear, Mama Bear, and Baby " +
  "Bear tramped home. Papa Bear growled that someone had tasted his porridge. " +
  "Mama Bear gasped at her broken chair. Baby Bear squeaked that someone was " +
  "still in his bed, and Goldilocks woke, leapt from the window, and ran away " +
  "down the garden path.";

export const LLM_SCRIPT = {
  extract: {
    characters: ["Goldilocks", "Papa Bear", "Mama Bear", "Baby Bear"],
    objects: ["porridge", "chair", "bed", "cottage", "garden path"],
  },
  context: {
    era: "a timeless fairy-tale past",
    place: "a wood in old Europe",
    cultural_notes: "Rustic cottage furnishings, carved wood, homespun cloth.",
  },
  characters: {},
  objects: {},
};

export const SUSPICIOUS_SCORES: Record<string, number> = {
  Goldilocks: 0.92,
  "Papa Bear": 0.88,
  "Mama Bear": 0.85,
  "Baby Bear": 0.8,
  porridge: 0.75,
  chair: 0.9,
  bed: 0.83,
  cottage: 0.78,
  "garden path": 0.42,
};

export const ALL_PLAUSIBLE_SCORES: Record<string, number> = {
  ...SUSPICIOUS_SCORES,
  "garden path": 0.73,
};

export function providersToml(scriptPath: string, scores: Record<string, number>): string {
  const scoreLines = Object.entries(scores)
    .map(([keyword, value]) => `"${keyword}" = ${value}`)
    .join("\n");
  return [
    "[llm]",
    'kind = "mock"',
    `script = "${scriptPath}"`,
    "",
    "[mesh]",
    'kind = "mock"',
    "",
    "[scorer]",
    'kind = "mock"',
    "[scorer.scores]",
    scoreLines,
    "",
    "[tts]",
    'kind = "mock"',
    "",
  ].join("\n");
}
