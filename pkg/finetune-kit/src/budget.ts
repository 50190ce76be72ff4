import { BudgetMismatch } from './errors.js';
import type { PackedRow, ValidatedRow } from './schema.js';

export const DEFAULT_CHARS_PER_TOKEN = 4.0;
export const DEFAULT_INPUT_BUDGET = 32768;
export const DEFAULT_OUTPUT_BUDGET = 1024;

/**
 * Heuristic token estimate from character length, rounded up. Counts code
 * points, not UTF-16 units, so the numbers agree with the exporter's
 * estimates on non-ASCII text.
 */
export function estimateTokens(
  text: string,
  charsPerToken: number = DEFAULT_CHARS_PER_TOKEN,
): number {
  if (charsPerToken <= 0) {
    throw new RangeError('charsPerToken must be positive');
  }
  let points = 0;
  for (const _ of text) points++;
  return points === 0 ? 0 : Math.ceil(points / charsPerToken);
}

export interface Budgets {
  input: number;
  output: number;
}

/**
 * Check that every packed row fits the given budgets under the chars/4
 * estimate; the query estimate covers system + instruction + input
 * concatenated, matching how the exporter packs. A dataset packed under
 * larger budgets fails here, which is the mismatch this guards against.
 */
export function checkPackedBudgets(
  rows: ValidatedRow<PackedRow>[],
  budgets: Budgets,
): void {
  for (const { line, row } of rows) {
    const queryTokens = estimateTokens(row.system + row.instruction + row.input);
    if (queryTokens > budgets.input) {
      throw new BudgetMismatch(
        `line ${line}: query estimate ${queryTokens} tokens exceeds the` +
          ` input budget ${budgets.input}; the dataset was packed under` +
          ` different budgets`,
      );
    }
    const targetTokens = estimateTokens(row.output);
    if (targetTokens > budgets.output) {
      throw new BudgetMismatch(
        `line ${line}: target estimate ${targetTokens} tokens exceeds the` +
          ` output budget ${budgets.output}; the dataset was packed under` +
          ` different budgets`,
      );
    }
  }
}
