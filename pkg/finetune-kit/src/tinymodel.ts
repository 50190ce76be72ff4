/**
 * A tiny deterministic stand-in model for dry runs: softmax regression from
 * hashed character-trigram features of the source text to the trigram
 * distribution of the target text. It exists so a training script can take
 * real optimization steps on real dataset rows in milliseconds, with no
 * network, GPU, or weights download. It is not a language model.
 */

export interface TrainPair {
  source: string;
  target: string;
}

export interface TrainReport {
  examples: number;
  steps: number;
  /** Full-batch loss measured at the start of each step. */
  losses: number[];
}

export interface TinyModelOptions {
  dimIn?: number;
  dimOut?: number;
  seed?: number;
  learningRate?: number;
}

const DIM_IN = 128;
const DIM_OUT = 64;

/** mulberry32: small seeded PRNG, plenty for weight init. */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** L1-normalized bag of hashed character trigrams. */
export function featurize(text: string, dim: number): Float64Array {
  const v = new Float64Array(dim);
  const s = text.toLowerCase();
  if (s.length < 3) {
    v[fnv1a(s) % dim] = 1;
    return v;
  }
  for (let i = 0; i + 3 <= s.length; i++) {
    v[fnv1a(s.slice(i, i + 3)) % dim] += 1;
  }
  let total = 0;
  for (let i = 0; i < dim; i++) total += v[i];
  if (total > 0) {
    for (let i = 0; i < dim; i++) v[i] /= total;
  }
  return v;
}

export class TinyModel {
  readonly dimIn: number;
  readonly dimOut: number;
  readonly seed: number;
  readonly learningRate: number;
  /** Row-major dimOut x dimIn weight matrix. */
  readonly weights: Float64Array;

  constructor(options: TinyModelOptions = {}) {
    this.dimIn = options.dimIn ?? DIM_IN;
    this.dimOut = options.dimOut ?? DIM_OUT;
    this.seed = options.seed ?? 0;
    // features are L1-normalized so the objective is extremely flat; a large
    // step size is still well inside the monotone regime
    this.learningRate = options.learningRate ?? 200;
    const rng = makeRng(this.seed);
    this.weights = new Float64Array(this.dimOut * this.dimIn);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (rng() - 0.5) * 0.02;
    }
  }

  private forward(x: Float64Array): Float64Array {
    const logits = new Float64Array(this.dimOut);
    for (let k = 0; k < this.dimOut; k++) {
      let acc = 0;
      const base = k * this.dimIn;
      for (let j = 0; j < this.dimIn; j++) acc += this.weights[base + j] * x[j];
      logits[k] = acc;
    }
    let max = -Infinity;
    for (let k = 0; k < this.dimOut; k++) if (logits[k] > max) max = logits[k];
    let z = 0;
    for (let k = 0; k < this.dimOut; k++) {
      logits[k] = Math.exp(logits[k] - max);
      z += logits[k];
    }
    for (let k = 0; k < this.dimOut; k++) logits[k] /= z;
    return logits;
  }

  /**
   * One full-batch gradient step. Returns the mean cross-entropy measured
   * before the update, so a logged sequence of step losses decreases when
   * the optimization is working.
   */
  step(pairs: TrainPair[]): number {
    if (pairs.length === 0) throw new RangeError('step needs at least one pair');
    const grad = new Float64Array(this.weights.length);
    let loss = 0;
    for (const pair of pairs) {
      const x = featurize(pair.source, this.dimIn);
      const t = featurize(pair.target, this.dimOut);
      const p = this.forward(x);
      for (let k = 0; k < this.dimOut; k++) {
        if (t[k] > 0) loss -= t[k] * Math.log(p[k]);
        const d = p[k] - t[k];
        if (d === 0) continue;
        const base = k * this.dimIn;
        for (let j = 0; j < this.dimIn; j++) {
          if (x[j] !== 0) grad[base + j] += d * x[j];
        }
      }
    }
    const scale = this.learningRate / pairs.length;
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] -= scale * grad[i];
    }
    return loss / pairs.length;
  }
}

/** Run `steps` optimization steps over the pairs; deterministic for a seed. */
export function trainTiny(
  pairs: TrainPair[],
  steps: number,
  options: TinyModelOptions = {},
): { model: TinyModel; report: TrainReport } {
  if (!Number.isInteger(steps) || steps < 1) {
    throw new RangeError('steps must be a positive integer');
  }
  const model = new TinyModel(options);
  const losses: number[] = [];
  for (let s = 0; s < steps; s++) {
    losses.push(model.step(pairs));
  }
  return { model, report: { examples: pairs.length, steps, losses } };
}
