import { readFileSync } from "fs";
import Papa from "papaparse";

/** Parsed trace: column-major numeric table keyed by header name. */
export interface TraceTable {
  columns: string[];
  rows: number;
  data: Map<string, Float64Array>;
}

/** Expected header for a run of nTotal robots, the first nControllable of
 *  which carry safety diagnostics. Mirrors the writer's layout. */
export function traceColumns(nTotal: number, nControllable: number): string[] {
  const cols = ["t"];
  for (let i = 1; i <= nTotal; i++) {
    cols.push(`p${i}_x`, `p${i}_y`, `th${i}`, `v${i}`, `w${i}`);
  }
  for (let i = 1; i <= nControllable; i++) {
    cols.push(
      `h${i}_true`, `h${i}_hat`, `e${i}`, `rho${i}`,
      `theta${i}`, `rhat${i}`, `slack${i}`, `event${i}`,
    );
  }
  for (let i = 1; i <= nControllable; i++) {
    for (let l = 1; l <= nTotal; l++) {
      cols.push(`esterr_${i}_${l}`);
    }
  }
  return cols;
}

export function parseTrace(path: string): TraceTable {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new Error(`trace ${path} does not parse: ${parsed.errors[0].message}`);
  }
  const grid = parsed.data;
  if (grid.length === 0) {
    throw new Error(`trace ${path} is empty: no header row`);
  }
  const columns = grid[0];
  const rows = grid.length - 1;
  const data = new Map<string, Float64Array>();
  columns.forEach((name, j) => {
    const col = new Float64Array(rows);
    for (let k = 0; k < rows; k++) {
      col[k] = Number(grid[k + 1][j]);
    }
    data.set(name, col);
  });
  return { columns, rows, data };
}

/** Fetch one column, failing with the column's name when it is absent. */
export function column(trace: TraceTable, name: string): Float64Array {
  const col = trace.data.get(name);
  if (col === undefined) {
    throw new Error(`trace is missing column '${name}'`);
  }
  return col;
}

/** Check a whole set of needed columns up front, naming the first gap. */
export function requireColumns(trace: TraceTable, names: string[]): void {
  for (const name of names) {
    if (!trace.data.has(name)) {
      throw new Error(`trace is missing column '${name}'`);
    }
  }
}
