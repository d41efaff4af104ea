/**
 * Batch figure renderer for simulator outputs.
 *
 * Exit codes mirror the simulator CLI: 0 success, 1 on any error
 * (schema violations included).
 */

import { writeFileSync } from "node:fs";
import { extname } from "node:path";
import { Command, Option } from "commander";
import { Resvg } from "@resvg/resvg-js";
import { FIGURE_KINDS, FigureKind, FigureSpec, renderFigure } from "./figures.js";
import { SchemaError } from "./schema.js";

export function writeFigure(spec: FigureSpec): void {
  const svg = renderFigure(spec);
  const ext = extname(spec.output).toLowerCase();
  if (ext === ".svg") {
    writeFileSync(spec.output, svg, "utf-8");
  } else if (ext === ".png") {
    const png = new Resvg(svg, { fitTo: { mode: "original" } }).render().asPng();
    writeFileSync(spec.output, png);
  } else {
    throw new SchemaError(`unsupported output extension '${ext}' (use .png or .svg)`);
  }
}

export function main(argv: string[]): number {
  const program = new Command()
    .name("phi4sim-plots")
    .description("Render figures from simulator CSV/JSON outputs")
    .addOption(
      new Option("-k, --kind <kind>", "figure kind").choices([...FIGURE_KINDS]).makeOptionMandatory(),
    )
    .requiredOption("-i, --input <file...>", "input CSV/JSON file(s)")
    .requiredOption("-o, --output <file>", "output image (.png or .svg)")
    .option("-t, --title <text>", "figure title")
    .option("--bins <n>", "histogram bin count", (v) => parseInt(v, 10))
    .option("--width <px>", "figure width", (v) => parseInt(v, 10))
    .option("--height <px>", "figure height", (v) => parseInt(v, 10))
    .exitOverride();

  try {
    program.parse(argv, { from: "user" });
  } catch {
    return 1;
  }
  const opts = program.opts();
  const spec: FigureSpec = {
    kind: opts.kind as FigureKind,
    inputs: opts.input as string[],
    output: opts.output as string,
    style: {
      ...(opts.title !== undefined && { title: opts.title as string }),
      ...(opts.bins !== undefined && { bins: opts.bins as number }),
      ...(opts.width !== undefined && { width: opts.width as number }),
      ...(opts.height !== undefined && { height: opts.height as number }),
    },
  };
  try {
    writeFigure(spec);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 1;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
