import fs from 'node:fs';

import { SchemaError } from './errors.js';

export interface JsonlRow {
  /** 1-based physical line number in the source file. */
  line: number;
  value: unknown;
}

/**
 * Read a JSONL file. Blank lines are tolerated and skipped; a line that is
 * not valid JSON raises SchemaError naming the physical line.
 */
export function readJsonl(path: string): JsonlRow[] {
  let text: string;
  try {
    text = fs.readFileSync(path, 'utf8');
  } catch (err) {
    throw new SchemaError(`cannot read ${path}: ${(err as Error).message}`);
  }
  const rows: JsonlRow[] = [];
  const lines = text.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    try {
      rows.push({ line: i + 1, value: JSON.parse(line) });
    } catch {
      throw new SchemaError(`${path} line ${i + 1}: invalid JSON`);
    }
  }
  return rows;
}
