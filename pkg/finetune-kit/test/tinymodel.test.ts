import fs from 'node:fs';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

import { describe, expect, it } from 'vitest';

import { featurize, makeRng, TinyModel, trainTiny, type TrainPair } from '../src/tinymodel.js';

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), '..', 'fixtures');

function packedPairs(): TrainPair[] {
  const lines = fs
    .readFileSync(path.join(FIXTURES, 'packed_five.jsonl'), 'utf8')
    .trim()
    .split('\n');
  return lines.map((l) => {
    const row = JSON.parse(l);
    return { source: row.system + row.instruction + row.input, target: row.output };
  });
}

describe('makeRng', () => {
  it('is deterministic per seed and stays in [0, 1)', () => {
    const a = makeRng(7);
    const b = makeRng(7);
    for (let i = 0; i < 100; i++) {
      const x = a();
      expect(x).toBe(b());
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThan(1);
    }
    expect(makeRng(8)()).not.toBe(makeRng(7)());
  });
});

describe('featurize', () => {
  it('L1-normalizes trigram counts', () => {
    const v = featurize('the gate opens at dusk', 64);
    const total = Array.from(v).reduce((a, b) => a + b, 0);
    expect(total).toBeCloseTo(1.0, 12);
  });

  it('is case-insensitive', () => {
    expect(featurize('The Gate', 64)).toEqual(featurize('the gate', 64));
  });

  it('handles texts shorter than a trigram', () => {
    const v = featurize('ab', 16);
    expect(Array.from(v).reduce((a, b) => a + b, 0)).toBe(1);
  });
});

describe('TinyModel', () => {
  it('initializes weights deterministically from the seed', () => {
    const a = new TinyModel({ seed: 3 });
    const b = new TinyModel({ seed: 3 });
    const c = new TinyModel({ seed: 4 });
    expect(a.weights).toEqual(b.weights);
    expect(a.weights).not.toEqual(c.weights);
  });

  it('refuses to step on an empty batch', () => {
    expect(() => new TinyModel().step([])).toThrow(RangeError);
  });
});

describe('trainTiny', () => {
  it('reports examples and steps', () => {
    const { report } = trainTiny(packedPairs(), 1, { seed: 42 });
    expect(report.examples).toBe(5);
    expect(report.steps).toBe(1);
    expect(report.losses).toHaveLength(1);
  });

  it('starts near the uniform-prediction loss', () => {
    // ln(64) for a 64-bucket target under near-uniform initial predictions
    const { report } = trainTiny(packedPairs(), 1, { seed: 42 });
    expect(report.losses[0]).toBeGreaterThan(4.0);
    expect(report.losses[0]).toBeLessThan(4.3);
  });

  it('decreases the loss strictly over 3 steps on the fixture', () => {
    const { report } = trainTiny(packedPairs(), 3, { seed: 42 });
    expect(report.losses).toHaveLength(3);
    expect(report.losses[1]).toBeLessThan(report.losses[0]);
    expect(report.losses[2]).toBeLessThan(report.losses[1]);
  });

  it('keeps decreasing over a longer run', () => {
    const { report } = trainTiny(packedPairs(), 25, { seed: 42 });
    for (let i = 1; i < report.losses.length; i++) {
      expect(report.losses[i]).toBeLessThan(report.losses[i - 1]);
    }
  });

  it('is reproducible for a seed and sensitive to it', () => {
    const a = trainTiny(packedPairs(), 4, { seed: 9 }).report.losses;
    const b = trainTiny(packedPairs(), 4, { seed: 9 }).report.losses;
    const c = trainTiny(packedPairs(), 4, { seed: 10 }).report.losses;
    expect(a).toEqual(b);
    expect(a).not.toEqual(c);
  });

  it('rejects a non-positive step count', () => {
    expect(() => trainTiny(packedPairs(), 0)).toThrow(RangeError);
    expect(() => trainTiny(packedPairs(), 1.5)).toThrow(RangeError);
  });
});
