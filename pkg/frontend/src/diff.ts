// Sentence-level diff between the original and masked note bodies, used to
// highlight exactly which sentences the masking removed.

export interface SentenceSpan {
  start: number;
  end: number;
  text: string;
}

const TERMINATORS = new Set([".", "!", "?", "\n"]);

/** Maximal segments between sentence terminators or newlines; each segment
 * keeps its terminator run, and the segments tile the text. Mirrors the
 * segmentation the masking pipeline uses. */
export function sentenceSpans(text: string): SentenceSpan[] {
  const spans: SentenceSpan[] = [];
  let start = 0;
  let i = 0;
  while (i < text.length) {
    if (TERMINATORS.has(text[i]!)) {
      let j = i + 1;
      while (j < text.length && TERMINATORS.has(text[j]!)) j += 1;
      spans.push({ start, end: j, text: text.slice(start, j) });
      start = j;
      i = j;
    } else {
      i += 1;
    }
  }
  if (start < text.length) {
    spans.push({ start, end: text.length, text: text.slice(start) });
  }
  return spans;
}

export interface DiffSentence {
  text: string;
  removed: boolean;
}

/** Longest-common-subsequence over trimmed sentences: sentences of the
 * original absent from the masked text are flagged removed. */
export function diffSentences(original: string, masked: string): DiffSentence[] {
  const a = sentenceSpans(original).map((s) => s.text);
  const b = sentenceSpans(masked).map((s) => s.text);
  const key = (s: string) => s.trim();
  const n = a.length;
  const m = b.length;
  const lcs: number[][] = Array.from({ length: n + 1 }, () => new Array(m + 1).fill(0));
  for (let i = n - 1; i >= 0; i -= 1) {
    for (let j = m - 1; j >= 0; j -= 1) {
      lcs[i]![j] =
        key(a[i]!) === key(b[j]!)
          ? lcs[i + 1]![j + 1]! + 1
          : Math.max(lcs[i + 1]![j]!, lcs[i]![j + 1]!);
    }
  }
  const out: DiffSentence[] = [];
  let i = 0;
  let j = 0;
  while (i < n) {
    if (j < m && key(a[i]!) === key(b[j]!)) {
      out.push({ text: a[i]!, removed: false });
      i += 1;
      j += 1;
    } else if (j < m && lcs[i]![j + 1]! >= lcs[i + 1]![j]!) {
      j += 1; // insertion on the masked side (does not happen with pure deletion)
    } else {
      out.push({ text: a[i]!, removed: true });
      i += 1;
    }
  }
  return out;
}
