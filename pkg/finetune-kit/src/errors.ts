/**
 * Error taxonomy shared by the CLIs. Each class maps to one exit code so
 * shell callers can branch without parsing messages.
 */

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'SchemaError';
  }
}

export class BudgetMismatch extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'BudgetMismatch';
  }
}

export class EmptyInput extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'EmptyInput';
  }
}

export const EXIT_OK = 0;
export const EXIT_UNEXPECTED = 1;
export const EXIT_USAGE = 2;
export const EXIT_SCHEMA = 3;
export const EXIT_BUDGET = 4;

/** Exit code for a thrown error; unknown errors fall through to 1. */
export function exitCodeFor(err: unknown): number {
  if (err instanceof BudgetMismatch) return EXIT_BUDGET;
  if (err instanceof SchemaError || err instanceof EmptyInput) return EXIT_SCHEMA;
  return EXIT_UNEXPECTED;
}
