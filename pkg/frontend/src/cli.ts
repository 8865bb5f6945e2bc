#!/usr/bin/env node
/** plot <kind> --in FILE [--in FILE2] --out figure.png [--dump-data out.csv]
 *
 * kinds: scalability | sensitivity | writebacks | latency_hist
 */

import * as fs from 'node:fs';

import { ChartResult, dumpToCsv, latencyHistChart, scalabilityChart,
         sensitivityChart, writebacksChart } from './charts.js';
import { SchemaError, parseReportHistogram, parseSweep, parseWritebacks } from './csv.js';

interface Args {
  kind: string;
  inputs: string[];
  out: string;
  dumpData?: string;
  title?: string;
}

function parseArgs(argv: string[]): Args {
  const [kind, ...rest] = argv;
  if (!kind) {
    throw new Error('usage: plot <scalability|sensitivity|writebacks|latency_hist> --in FILE --out FILE.png [--dump-data FILE.csv] [--title T]');
  }
  const args: Args = { kind, inputs: [], out: 'figure.png' };
  for (let i = 0; i < rest.length; i++) {
    const flag = rest[i];
    const value = rest[i + 1];
    switch (flag) {
      case '--in':
        args.inputs.push(need(flag, value));
        i++;
        break;
      case '--out':
        args.out = need(flag, value);
        i++;
        break;
      case '--dump-data':
        args.dumpData = need(flag, value);
        i++;
        break;
      case '--title':
        args.title = need(flag, value);
        i++;
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (args.inputs.length === 0) {
    throw new Error('at least one --in file is required');
  }
  return args;
}

function need(flag: string, value: string | undefined): string {
  if (value === undefined) throw new Error(`${flag} needs a value`);
  return value;
}

export function render(args: Args): ChartResult {
  switch (args.kind) {
    case 'scalability':
      return scalabilityChart(parseSweep(args.inputs[0]),
                              args.title?.toUpperCase());
    case 'sensitivity':
      return sensitivityChart(parseSweep(args.inputs[0]),
                              args.title?.toUpperCase());
    case 'writebacks':
      return writebacksChart(args.inputs.map(parseWritebacks),
                             args.title?.toUpperCase());
    case 'latency_hist':
      return latencyHistChart(parseReportHistogram(args.inputs[0]),
                              args.title?.toUpperCase());
    default:
      throw new Error(`unknown figure kind '${args.kind}'`);
  }
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    const result = render(args);
    fs.writeFileSync(args.out, result.raster.toPng());
    if (args.dumpData) {
      fs.writeFileSync(args.dumpData, dumpToCsv(result.dump));
    }
    console.log(`wrote ${args.out}` + (args.dumpData ? ` and ${args.dumpData}` : ''));
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
    } else {
      console.error(String(err instanceof Error ? err.message : err));
    }
    return 1;
  }
}

const invokedDirectly = process.argv[1] && (
  process.argv[1].endsWith('cli.js') || process.argv[1].endsWith('cli.ts'));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
