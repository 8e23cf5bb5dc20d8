#!/usr/bin/env node
import * as fs from "fs";
import * as path from "path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { Figure, inputsFigure, rcbfFigure, trajectoriesFigure } from "./figures";
import { renderSvg } from "./render";
import { parseScenario } from "./scenario";
import { parseTrace } from "./trace";

const FIGURE_NAMES = ["trajectories", "rcbf", "inputs"] as const;
type FigureName = (typeof FIGURE_NAMES)[number];

export function main(argv: string[]): number {
  const args = yargs(argv)
    .scriptName("rcbfplot")
    .usage("$0 --trace <csv> --scenario <yaml> --out <dir>")
    .option("trace", { type: "string", demandOption: true, describe: "trace CSV written by the simulator" })
    .option("scenario", { type: "string", demandOption: true, describe: "scenario file the trace was produced from" })
    .option("out", { type: "string", demandOption: true, describe: "directory to write the SVG files into" })
    .option("figures", {
      type: "array",
      string: true,
      default: [...FIGURE_NAMES] as string[],
      describe: "subset of figures to write",
      choices: [...FIGURE_NAMES] as string[],
    })
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    })
    .parseSync();

  const wanted = args.figures as FigureName[];
  if (wanted.length === 0) {
    throw new Error("no figures selected");
  }

  const trace = parseTrace(args.trace);
  const scenario = parseScenario(args.scenario);
  fs.mkdirSync(args.out, { recursive: true });

  const builders: Record<FigureName, () => Figure> = {
    trajectories: () => trajectoriesFigure(trace, scenario),
    rcbf: () => rcbfFigure(trace, scenario),
    inputs: () => inputsFigure(trace, scenario),
  };

  for (const name of FIGURE_NAMES) {
    if (!wanted.includes(name)) continue;
    const target = path.join(args.out, `${name}.svg`);
    fs.writeFileSync(target, renderSvg(builders[name]()));
    process.stdout.write(`wrote ${target}\n`);
  }
  return 0;
}

if (require.main === module) {
  try {
    process.exitCode = main(hideBin(process.argv));
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`rcbfplot: ${message}\n`);
    process.exitCode = 1;
  }
}
