/**
 * Zod schemas mirroring the story-spine JSONL reader contract: every file
 * that package emits validates here, and every row its readers reject is
 * rejected here too (missing key, blank string, wrong type). Extra keys are
 * tolerated, as they are there.
 */

import { z } from 'zod';

import { SchemaError } from './errors.js';
import { readJsonl } from './jsonl.js';

const nonBlank = z
  .string()
  .refine((s) => s.trim().length > 0, { message: 'must be a non-blank string' });

export const distillRowSchema = z.looseObject({
  scene_id: nonBlank,
  input_text: nonBlank,
  reasoning_trace: nonBlank,
  nuclei: z.array(z.string()),
});

export const packedRowSchema = z.looseObject({
  system: nonBlank,
  instruction: nonBlank,
  input: nonBlank,
  output: nonBlank,
});

// document_id is not blank-checked downstream, so it is not blank-checked here
export const sumRowSchema = z.looseObject({
  document_id: z.string(),
  backbone: nonBlank,
  summary: nonBlank,
});

export type DistillRow = z.infer<typeof distillRowSchema>;
export type PackedRow = z.infer<typeof packedRowSchema>;
export type SumRow = z.infer<typeof sumRowSchema>;

export type DatasetKind = 'distill' | 'packed' | 'sum';

const SCHEMAS: Record<DatasetKind, z.ZodType> = {
  distill: distillRowSchema,
  packed: packedRowSchema,
  sum: sumRowSchema,
};

export interface ValidatedRow<T> {
  line: number;
  row: T;
}

function describeIssue(issue: z.core.$ZodIssue): string {
  const where = issue.path.length ? issue.path.join('.') : 'row';
  return `${where}: ${issue.message}`;
}

/**
 * Validate every row of a JSONL file against one dataset schema. The first
 * offending row aborts with a SchemaError naming its line.
 */
export function loadDataset<T = unknown>(
  kind: DatasetKind,
  path: string,
): ValidatedRow<T>[] {
  const schema = SCHEMAS[kind];
  const out: ValidatedRow<T>[] = [];
  for (const { line, value } of readJsonl(path)) {
    const parsed = schema.safeParse(value);
    if (!parsed.success) {
      const issue = describeIssue(parsed.error.issues[0]);
      throw new SchemaError(`${path} line ${line}: ${issue}`);
    }
    out.push({ line, row: parsed.data as T });
  }
  return out;
}

export function loadPacked(path: string): ValidatedRow<PackedRow>[] {
  return loadDataset<PackedRow>('packed', path);
}

export function loadSum(path: string): ValidatedRow<SumRow>[] {
  return loadDataset<SumRow>('sum', path);
}

export function loadDistill(path: string): ValidatedRow<DistillRow>[] {
  return loadDataset<DistillRow>('distill', path);
}

/** Validate a parsed value against one row schema; SchemaError on failure. */
export function checkRow(kind: DatasetKind, value: unknown): void {
  const parsed = SCHEMAS[kind].safeParse(value);
  if (!parsed.success) {
    throw new SchemaError(describeIssue(parsed.error.issues[0]));
  }
}
