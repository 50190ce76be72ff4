/**
 * Fine-tune the backbone-conditioned summarizer on sum.jsonl rows.
 *
 * Same contract as train-inducer with the summarization dataset: validate,
 * then dry-run steps on the tiny stand-in, or emit config plus checkpoint
 * artifacts for an external trainer. Offline by construction.
 */

import fs from 'node:fs';
import path from 'node:path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { buildRunMetadata, buildTrainConfig, emitYamlConfig } from '../config.js';
import { SchemaError } from '../errors.js';
import { loadSum } from '../schema.js';
import { trainTiny, type TrainPair } from '../tinymodel.js';
import { formatLosses, plural, runCli } from './common.js';

const argv = yargs(hideBin(process.argv))
  .scriptName('train-summarizer')
  .option('data', {
    type: 'string',
    description: 'sum.jsonl from the exporter',
    demandOption: true,
  })
  .option('method', {
    type: 'string',
    choices: ['parameter-efficient', 'full'] as const,
    default: 'full',
    description: 'fine-tuning method',
  })
  .option('base-model', {
    type: 'string',
    default: 'qwen2.5-0.5b-instruct',
    description: 'base model id for the emitted config',
  })
  .option('input-budget', { type: 'number', default: 8192 })
  .option('output-budget', { type: 'number', default: 1024 })
  .option('out', {
    type: 'string',
    description: 'output directory for config, checkpoint, and log',
  })
  .option('dry-run', {
    type: 'boolean',
    default: false,
    description: 'validate the dataset and take stand-in steps, write nothing',
  })
  .option('steps', {
    type: 'number',
    description: 'optimization steps (default 1 dry, 50 full)',
  })
  .option('seed', { type: 'number', default: 42 })
  .option('json', {
    type: 'boolean',
    default: false,
    description: 'print a machine-readable report',
  })
  .strict()
  .fail((msg, err) => {
    if (err) throw err;
    process.stderr.write(`error: ${msg}\n`);
    process.exit(2);
  })
  .parseSync();

runCli(() => {
  const rows = loadSum(argv.data);
  if (rows.length === 0) {
    throw new SchemaError(`${argv.data} holds no rows`);
  }
  const pairs: TrainPair[] = rows.map(({ row }) => ({
    source: row.backbone,
    target: row.summary,
  }));
  const steps = argv.steps ?? (argv.dryRun ? 1 : 50);
  const { model, report } = trainTiny(pairs, steps, { seed: argv.seed });

  if (argv.dryRun) {
    if (argv.json) {
      console.log(JSON.stringify({ mode: 'dry-run', ...report }));
    } else {
      console.log(`dry run ok: ${plural(report.examples, 'example')}, ${plural(report.steps, 'step')}`);
      console.log(`stand-in loss: ${formatLosses(report.losses)}`);
    }
    return;
  }

  if (!argv.out) {
    throw new SchemaError('--out is required unless --dry-run');
  }
  const config = buildTrainConfig({
    datasetPath: argv.data,
    baseModelId: argv.baseModel,
    method: argv.method as 'parameter-efficient' | 'full',
    inputBudget: argv.inputBudget,
    outputBudget: argv.outputBudget,
    outputPath: argv.out,
  });
  fs.mkdirSync(argv.out, { recursive: true });
  fs.writeFileSync(path.join(argv.out, 'train-config.yaml'), emitYamlConfig(config));
  fs.writeFileSync(
    path.join(argv.out, 'run-metadata.json'),
    JSON.stringify(buildRunMetadata(config), null, 2) + '\n',
  );
  fs.writeFileSync(
    path.join(argv.out, 'checkpoint.json'),
    JSON.stringify(
      {
        kind: 'tiny-standin-checkpoint',
        dimIn: model.dimIn,
        dimOut: model.dimOut,
        seed: model.seed,
        steps: report.steps,
        weights: Array.from(model.weights),
      },
      null,
      2,
    ) + '\n',
  );
  fs.writeFileSync(
    path.join(argv.out, 'train-log.json'),
    JSON.stringify(report, null, 2) + '\n',
  );
  if (argv.json) {
    console.log(JSON.stringify({ mode: 'full', runId: config.runId, ...report }));
  } else {
    console.log(`trained stand-in on ${plural(report.examples, 'example')}`);
    console.log(`  run id: ${config.runId}`);
    console.log(`  loss: ${formatLosses([report.losses[0], report.losses.at(-1)!])}`);
    console.log(`  wrote ${argv.out}/train-config.yaml, checkpoint.json, train-log.json`);
  }
});
