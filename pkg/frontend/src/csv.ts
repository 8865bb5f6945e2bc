/** Parsers for the simulator's output file schemas. */

import * as fs from 'node:fs';

export class SchemaError extends Error {}

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(path: string): Table {
  const text = fs.readFileSync(path, 'utf8');
  const lines = text.split('\n').map((l) => l.trimEnd()).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${path}: file is empty`);
  }
  const header = lines[0].split(',');
  const rows = lines.slice(1).map((l) => l.split(','));
  return { header, rows };
}

function requireColumns(path: string, table: Table, expected: string[]): void {
  for (const col of expected) {
    if (!table.header.includes(col)) {
      throw new SchemaError(`${path}: missing column '${col}' (found: ${table.header.join(',')})`);
    }
  }
}

function numeric(path: string, column: string, raw: string, line: number): number {
  const v = Number(raw);
  if (!Number.isFinite(v)) {
    throw new SchemaError(`${path}:${line}: column '${column}' is not numeric: '${raw}'`);
  }
  return v;
}

/** sweep.csv: axis_point,max_sustainable_gbps */
export interface SweepData {
  labels: string[];
  values: number[];
}

export function parseSweep(path: string): SweepData {
  const table = parseCsv(path);
  requireColumns(path, table, ['axis_point', 'max_sustainable_gbps']);
  const li = table.header.indexOf('axis_point');
  const vi = table.header.indexOf('max_sustainable_gbps');
  if (table.rows.length === 0) {
    throw new SchemaError(`${path}: no data rows`);
  }
  const labels: string[] = [];
  const values: number[] = [];
  table.rows.forEach((row, i) => {
    labels.push(row[li]);
    values.push(numeric(path, 'max_sustainable_gbps', row[vi], i + 2));
  });
  return { labels, values };
}

/** writebacks*.csv: interval_start_ns,l2_writebacks,llc_writebacks */
export interface WritebackSeries {
  name: string;
  t: number[];
  l2: number[];
  llc: number[];
}

export function parseWritebacks(path: string): WritebackSeries {
  const table = parseCsv(path);
  requireColumns(path, table, ['interval_start_ns', 'l2_writebacks', 'llc_writebacks']);
  const ti = table.header.indexOf('interval_start_ns');
  const l2i = table.header.indexOf('l2_writebacks');
  const l3i = table.header.indexOf('llc_writebacks');
  const out: WritebackSeries = { name: path, t: [], l2: [], llc: [] };
  table.rows.forEach((row, i) => {
    out.t.push(numeric(path, 'interval_start_ns', row[ti], i + 2));
    out.l2.push(numeric(path, 'l2_writebacks', row[l2i], i + 2));
    out.llc.push(numeric(path, 'llc_writebacks', row[l3i], i + 2));
  });
  return out;
}

/** report.json: latency histogram bins of port 0. */
export interface HistogramData {
  lower: number[];
  upper: number[];
  count: number[];
}

export function parseReportHistogram(path: string): HistogramData {
  let doc: any;
  try {
    doc = JSON.parse(fs.readFileSync(path, 'utf8'));
  } catch (err) {
    throw new SchemaError(`${path}: not valid JSON (${err})`);
  }
  const latency = doc?.results?.latency;
  if (!Array.isArray(latency) || latency.length === 0) {
    throw new SchemaError(`${path}: missing results.latency`);
  }
  const hist = latency[0]?.histogram;
  if (!Array.isArray(hist)) {
    throw new SchemaError(`${path}: missing histogram in results.latency[0]`);
  }
  const out: HistogramData = { lower: [], upper: [], count: [] };
  for (const bin of hist) {
    if (!Array.isArray(bin) || bin.length !== 3) {
      throw new SchemaError(`${path}: histogram bins must be [lower_ns, upper_ns, count]`);
    }
    out.lower.push(bin[0]);
    out.upper.push(bin[1]);
    out.count.push(bin[2]);
  }
  return out;
}
