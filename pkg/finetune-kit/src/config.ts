/**
 * Training-job specs and LLaMA-Factory-style YAML emission.
 *
 * Real fine-tuning runs on multi-GPU infrastructure this kit does not
 * manage; what it owns is the configuration. A job spec pins the dataset,
 * base model, method, and the token budgets the dataset was packed under,
 * and the emitter renders a config file ready for an external trainer.
 * Emission is deterministic: the run id is a content hash of the job spec, not
 * a timestamp, so regenerating a config is byte-identical.
 *
 * The optimization hyperparameters below are this kit's defaults, chosen to
 * be unsurprising for the model sizes involved. They are choices, not facts
 * about any particular published run.
 */

import { createHash } from 'node:crypto';

import { z } from 'zod';

import { BudgetMismatch, SchemaError } from './errors.js';

export type TrainMethod = 'parameter-efficient' | 'full';

export interface BaseModel {
  id: string;
  modelNameOrPath: string;
  template: string;
  maxLength: number;
}

export const BASE_MODELS: BaseModel[] = [
  {
    id: 'qwen2.5-7b-instruct',
    modelNameOrPath: 'Qwen/Qwen2.5-7B-Instruct',
    template: 'qwen',
    maxLength: 131072,
  },
  {
    id: 'qwen2.5-0.5b-instruct',
    modelNameOrPath: 'Qwen/Qwen2.5-0.5B-Instruct',
    template: 'qwen',
    maxLength: 32768,
  },
  {
    id: 'llama3.1-8b-instruct',
    modelNameOrPath: 'meta-llama/Llama-3.1-8B-Instruct',
    template: 'llama3',
    maxLength: 131072,
  },
];

export const trainJobSpecSchema = z.object({
  datasetPath: z.string().min(1),
  baseModelId: z.string().min(1),
  method: z.enum(['parameter-efficient', 'full']),
  inputBudget: z.number().int().positive(),
  outputBudget: z.number().int().positive(),
  outputPath: z.string().min(1),
});

export type TrainJobSpec = z.infer<typeof trainJobSpecSchema>;

export interface Hyperparams {
  learningRate: number;
  numEpochs: number;
  batchSize: number;
  gradientAccumulationSteps: number;
  warmupRatio: number;
  seed: number;
  loraRank?: number;
  loraAlpha?: number;
  loraDropout?: number;
}

const LORA_DEFAULTS: Hyperparams = {
  learningRate: 1e-4,
  numEpochs: 3,
  batchSize: 8,
  gradientAccumulationSteps: 4,
  warmupRatio: 0.03,
  seed: 42,
  loraRank: 16,
  loraAlpha: 32,
  loraDropout: 0.05,
};

const FULL_DEFAULTS: Hyperparams = {
  learningRate: 2e-5,
  numEpochs: 2,
  batchSize: 16,
  gradientAccumulationSteps: 2,
  warmupRatio: 0.03,
  seed: 42,
};

export interface TrainRunConfig {
  runId: string;
  spec: TrainJobSpec;
  baseModel: BaseModel;
  hyperparams: Hyperparams;
}

function hash12(payload: string): string {
  return createHash('sha256').update(payload).digest('hex').slice(0, 12);
}

export function resolveBaseModel(id: string): BaseModel {
  const model = BASE_MODELS.find((m) => m.id === id);
  if (!model) {
    const known = BASE_MODELS.map((m) => m.id).join(', ');
    throw new SchemaError(`unknown base model '${id}'; known: ${known}`);
  }
  return model;
}

/**
 * Validate a spec and resolve it into a full run configuration. The budget
 * sum must fit the base model's context window; a spec whose budgets cannot
 * fit is mis-stated no matter what the dataset holds.
 */
export function buildTrainConfig(
  spec: TrainJobSpec,
  overrides: Partial<Hyperparams> = {},
): TrainRunConfig {
  const parsed = trainJobSpecSchema.safeParse(spec);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    throw new SchemaError(`invalid job spec: ${issue.path.join('.')}: ${issue.message}`);
  }
  const baseModel = resolveBaseModel(spec.baseModelId);
  const cutoff = spec.inputBudget + spec.outputBudget;
  if (cutoff > baseModel.maxLength) {
    throw new BudgetMismatch(
      `budgets ${spec.inputBudget}+${spec.outputBudget} exceed ${baseModel.id}` +
        ` context length ${baseModel.maxLength}`,
    );
  }
  const defaults = spec.method === 'parameter-efficient' ? LORA_DEFAULTS : FULL_DEFAULTS;
  const hyperparams = { ...defaults, ...overrides };
  const runId = `${spec.method === 'parameter-efficient' ? 'lora' : 'full'}-${hash12(
    JSON.stringify({ spec, hyperparams }),
  )}`;
  return { runId, spec: parsed.data, baseModel, hyperparams };
}

/** Render a training config in LLaMA-Factory YAML style. */
export function emitYamlConfig(config: TrainRunConfig): string {
  const { spec, baseModel, hyperparams: hp } = config;
  const lines: string[] = [
    `### run: ${config.runId}`,
    '',
    '### model',
    `model_name_or_path: ${baseModel.modelNameOrPath}`,
    `template: ${baseModel.template}`,
    '',
    '### method',
    'stage: sft',
    'do_train: true',
    `finetuning_type: ${spec.method === 'parameter-efficient' ? 'lora' : 'full'}`,
  ];
  if (spec.method === 'parameter-efficient') {
    lines.push(
      `lora_rank: ${hp.loraRank}`,
      `lora_alpha: ${hp.loraAlpha}`,
      `lora_dropout: ${hp.loraDropout}`,
      'lora_target: all',
    );
  }
  lines.push(
    '',
    '### dataset',
    `dataset: ${spec.datasetPath}`,
    `cutoff_len: ${spec.inputBudget + spec.outputBudget}`,
    `max_input_tokens: ${spec.inputBudget}`,
    `max_new_tokens: ${spec.outputBudget}`,
    '',
    '### training',
    `output_dir: ${spec.outputPath}/${config.runId}`,
    `per_device_train_batch_size: ${hp.batchSize}`,
    `gradient_accumulation_steps: ${hp.gradientAccumulationSteps}`,
    `learning_rate: ${hp.learningRate}`,
    `num_train_epochs: ${hp.numEpochs}`,
    'lr_scheduler_type: cosine',
    `warmup_ratio: ${hp.warmupRatio}`,
    `seed: ${hp.seed}`,
    'bf16: true',
    '',
    '### logging',
    'logging_steps: 10',
    'save_steps: 200',
    'report_to: none',
  );
  return lines.join('\n') + '\n';
}

export interface RunMetadata {
  runId: string;
  method: TrainMethod;
  baseModelId: string;
  datasetPath: string;
  inputBudget: number;
  outputBudget: number;
  configHash: string;
  hyperparams: Hyperparams;
}

/** Reproducibility metadata for a run; deterministic for a given config. */
export function buildRunMetadata(config: TrainRunConfig): RunMetadata {
  return {
    runId: config.runId,
    method: config.spec.method,
    baseModelId: config.spec.baseModelId,
    datasetPath: config.spec.datasetPath,
    inputBudget: config.spec.inputBudget,
    outputBudget: config.spec.outputBudget,
    configHash: hash12(emitYamlConfig(config)),
    hyperparams: config.hyperparams,
  };
}
