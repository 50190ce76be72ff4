/**
 * BERTScore-style precision/recall/F1 with deterministic embeddings.
 *
 * A token embeds as the L2-normalized count vector of the character
 * trigrams of `^token$`, kept sparse and exact, so the scorer needs no
 * model download and runs identically everywhere. Matching is the usual
 * greedy protocol: each candidate token takes its best cosine against the
 * reference tokens (precision side), each reference token its best against
 * the candidate (recall side). Counts are non-negative, so every score
 * lives in [0,1]; identical texts score exactly 1.
 */

import { EmptyInput } from './errors.js';

/** Sparse unit vector: trigram -> normalized count. */
export type Embedding = Map<string, number>;

export interface Score {
  precision: number;
  recall: number;
  f1: number;
}

export function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((t) => t.length > 0);
}

/** Unit-length trigram-count embedding of one token. */
export function embed(token: string): Embedding {
  const v: Embedding = new Map();
  const padded = `^${token}$`;
  for (let i = 0; i + 3 <= padded.length; i++) {
    const gram = padded.slice(i, i + 3);
    v.set(gram, (v.get(gram) ?? 0) + 1);
  }
  let norm = 0;
  for (const count of v.values()) norm += count * count;
  norm = Math.sqrt(norm);
  for (const [gram, count] of v) v.set(gram, count / norm);
  return v;
}

function dot(a: Embedding, b: Embedding): number {
  const [small, large] = a.size <= b.size ? [a, b] : [b, a];
  let acc = 0;
  for (const [gram, value] of small) {
    const other = large.get(gram);
    if (other !== undefined) acc += value * other;
  }
  return acc;
}

/** Greedy-matching score for one candidate/reference pair. */
export function scorePair(candidate: string, reference: string): Score {
  const candTokens = tokenize(candidate);
  const refTokens = tokenize(reference);
  if (candTokens.length === 0) throw new EmptyInput('candidate has no tokens');
  if (refTokens.length === 0) throw new EmptyInput('reference has no tokens');

  const candVecs = candTokens.map(embed);
  const refVecs = refTokens.map(embed);

  let precision = 0;
  for (const c of candVecs) {
    let best = 0;
    for (const r of refVecs) {
      const sim = dot(c, r);
      if (sim > best) best = sim;
    }
    precision += best;
  }
  precision /= candVecs.length;

  let recall = 0;
  for (const r of refVecs) {
    let best = 0;
    for (const c of candVecs) {
      const sim = dot(c, r);
      if (sim > best) best = sim;
    }
    recall += best;
  }
  recall /= refVecs.length;

  const f1 = precision + recall === 0 ? 0 : (2 * precision * recall) / (precision + recall);
  return { precision, recall, f1 };
}

/**
 * Corpus score: the mean pair score over equal-length candidate and
 * reference lists.
 */
export function scoreCorpus(candidates: string[], references: string[]): Score {
  if (candidates.length !== references.length) {
    throw new EmptyInput(
      `candidate and reference counts differ (${candidates.length} vs ${references.length})`,
    );
  }
  if (candidates.length === 0) {
    throw new EmptyInput('no candidate/reference pairs');
  }
  let precision = 0;
  let recall = 0;
  let f1 = 0;
  for (let i = 0; i < candidates.length; i++) {
    let pair: Score;
    try {
      pair = scorePair(candidates[i], references[i]);
    } catch (err) {
      if (err instanceof EmptyInput) {
        throw new EmptyInput(`pair ${i + 1}: ${err.message}`);
      }
      throw err;
    }
    precision += pair.precision;
    recall += pair.recall;
    f1 += pair.f1;
  }
  const n = candidates.length;
  return { precision: precision / n, recall: recall / n, f1: f1 / n };
}
