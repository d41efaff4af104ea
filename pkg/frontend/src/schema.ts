/**
 * Input loading and schema validation for the figure tool.
 *
 * The simulator CLI writes RFC-4180 CSV (header row, '.' decimals) and
 * UTF-8 JSON reports. Every figure kind declares the columns it needs;
 * a missing or malformed column fails with a SchemaError naming it.
 */

import { readFileSync } from "node:fs";
import { parse } from "csv-parse/sync";

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface Table {
  path: string;
  columns: string[];
  rows: Record<string, string>[];
}

export function loadCsv(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    throw new SchemaError(`cannot read ${path}: ${(err as Error).message}`);
  }
  let rows: Record<string, string>[];
  try {
    rows = parse(text, { columns: true, skip_empty_lines: true, bom: true });
  } catch (err) {
    throw new SchemaError(`${path}: not valid CSV: ${(err as Error).message}`);
  }
  if (rows.length === 0) {
    throw new SchemaError(`${path}: empty CSV, no data rows`);
  }
  return { path, columns: Object.keys(rows[0]), rows };
}

/** Pull one numeric column, erroring with the column name on any defect. */
export function numericColumn(table: Table, name: string): number[] {
  if (!table.columns.includes(name)) {
    throw new SchemaError(
      `${table.path}: missing column '${name}' (have: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((row, i) => {
    const value = Number(row[name]);
    if (!Number.isFinite(value)) {
      throw new SchemaError(
        `${table.path}: column '${name}' row ${i + 1}: not a finite number (${row[name]!})`,
      );
    }
    return value;
  });
}

/**
 * Optional stderr-style column: absent column gives null, and non-finite
 * entries ('inf' on rule-of-three upper-bound rows) give NaN so the
 * renderer can skip their error bars.
 */
export function optionalColumn(table: Table, name: string): number[] | null {
  if (!table.columns.includes(name)) return null;
  return table.rows.map((row) => {
    const text = row[name]!.trim().toLowerCase();
    if (text === "inf" || text === "-inf" || text === "nan" || text === "") return NaN;
    return Number(row[name]);
  });
}

/** One relaxation-rate report as written by the simulator's gap command. */
export interface GapReport {
  path: string;
  side: number;
  beta: number;
  rate: number;
  stderr: number;
  inconclusive: boolean;
}

export function loadGapReport(path: string): GapReport {
  let payload: unknown;
  try {
    payload = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new SchemaError(`${path}: not valid JSON: ${(err as Error).message}`);
  }
  const obj = payload as Record<string, unknown>;
  for (const field of ["side", "beta", "rate", "stderr", "inconclusive"]) {
    if (!(field in obj)) {
      throw new SchemaError(`${path}: missing field '${field}' in gap report`);
    }
  }
  const num = (field: string): number => {
    const v = obj[field];
    if (typeof v !== "number") {
      throw new SchemaError(`${path}: field '${field}' must be a number`);
    }
    return v;
  };
  return {
    path,
    side: num("side"),
    beta: num("beta"),
    rate: obj["rate"] === null ? NaN : num("rate"),
    stderr: obj["stderr"] === null ? NaN : num("stderr"),
    inconclusive: Boolean(obj["inconclusive"]),
  };
}
