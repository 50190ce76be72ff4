import { exitCodeFor } from '../errors.js';

/** Run a CLI body; thrown errors become one stderr line and an exit code. */
export function runCli(fn: () => void): void {
  try {
    fn();
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`error: ${message}\n`);
    process.exit(exitCodeFor(err));
  }
}

export function formatLosses(losses: number[]): string {
  return losses.map((l) => l.toFixed(6)).join(' -> ');
}

export function plural(n: number, word: string): string {
  return `${n} ${word}${n === 1 ? '' : 's'}`;
}
