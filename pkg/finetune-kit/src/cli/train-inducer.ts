/**
 * Fine-tune the nucleus inducer on packed few-shot rows.
 *
 * The dataset is validated against the exporter's schema and the declared
 * token budgets before anything runs. --dry-run then takes real optimization
 * steps on a tiny stand-in model and reports the losses; a full run
 * additionally emits the training config for an external trainer plus the
 * stand-in adapter and log. Nothing here touches the network or a GPU.
 */

import fs from 'node:fs';
import path from 'node:path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { checkPackedBudgets, DEFAULT_INPUT_BUDGET, DEFAULT_OUTPUT_BUDGET } from '../budget.js';
import { buildRunMetadata, buildTrainConfig, emitYamlConfig } from '../config.js';
import { SchemaError } from '../errors.js';
import { loadPacked } from '../schema.js';
import { trainTiny, type TrainPair } from '../tinymodel.js';
import { formatLosses, plural, runCli } from './common.js';

const argv = yargs(hideBin(process.argv))
  .scriptName('train-inducer')
  .option('data', {
    type: 'string',
    description: 'packed_train.jsonl from the exporter',
    demandOption: true,
  })
  .option('method', {
    type: 'string',
    choices: ['parameter-efficient', 'full'] as const,
    default: 'parameter-efficient',
    description: 'fine-tuning method',
  })
  .option('base-model', {
    type: 'string',
    default: 'qwen2.5-7b-instruct',
    description: 'base model id for the emitted config',
  })
  .option('input-budget', {
    type: 'number',
    default: DEFAULT_INPUT_BUDGET,
    description: 'input token budget the dataset was packed under',
  })
  .option('output-budget', {
    type: 'number',
    default: DEFAULT_OUTPUT_BUDGET,
    description: 'output token budget the dataset was packed under',
  })
  .option('out', {
    type: 'string',
    description: 'output directory for config, adapter, and log',
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
  const rows = loadPacked(argv.data);
  if (rows.length === 0) {
    throw new SchemaError(`${argv.data} holds no rows`);
  }
  checkPackedBudgets(rows, { input: argv.inputBudget, output: argv.outputBudget });

  const pairs: TrainPair[] = rows.map(({ row }) => ({
    source: row.system + row.instruction + row.input,
    target: row.output,
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
    path.join(argv.out, 'adapter.json'),
    JSON.stringify(
      {
        kind: 'tiny-standin-adapter',
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
    console.log(`  wrote ${argv.out}/train-config.yaml, adapter.json, train-log.json`);
  }
});
