/**
 * Corpus BERTScore between two line-aligned text files. Lines pair up by
 * position; scores print on the 0-100 scale.
 */

import fs from 'node:fs';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { scoreCorpus } from '../bertscore.js';
import { SchemaError } from '../errors.js';
import { runCli } from './common.js';

const argv = yargs(hideBin(process.argv))
  .scriptName('bertscore')
  .option('candidates', {
    type: 'string',
    description: 'text file, one candidate per line',
    demandOption: true,
  })
  .option('references', {
    type: 'string',
    description: 'text file, one reference per line',
    demandOption: true,
  })
  .option('output', {
    alias: 'o',
    type: 'string',
    description: 'also write the JSON report here',
  })
  .strict()
  .fail((msg, err) => {
    if (err) throw err;
    process.stderr.write(`error: ${msg}\n`);
    process.exit(2);
  })
  .parseSync();

function readLines(path: string): string[] {
  let text: string;
  try {
    text = fs.readFileSync(path, 'utf8');
  } catch (err) {
    throw new SchemaError(`cannot read ${path}: ${(err as Error).message}`);
  }
  return text.replace(/\n+$/, '').split('\n');
}

runCli(() => {
  const candidates = readLines(argv.candidates);
  const references = readLines(argv.references);
  const score = scoreCorpus(candidates, references);
  const pct = (x: number) => Math.round(x * 10000) / 100;
  const report = {
    pairs: candidates.length,
    precision_pct: pct(score.precision),
    recall_pct: pct(score.recall),
    f1_pct: pct(score.f1),
  };
  const rendered = JSON.stringify(report, null, 2) + '\n';
  if (argv.output) {
    fs.writeFileSync(argv.output, rendered);
  }
  process.stdout.write(rendered);
});
