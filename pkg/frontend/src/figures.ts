/**
 * The five figure kinds and their CSV/JSON input contracts.
 *
 * Data is taken verbatim from the simulator outputs; the only computation
 * done here is presentational (histogram binning and the log-log guide
 * line fit on variance ladders). Error bars are drawn whenever a stderr
 * column is present.
 */

import {
  SchemaError,
  loadCsv,
  loadGapReport,
  numericColumn,
  optionalColumn,
} from "./schema.js";
import { Axis, Chart, DEFAULT_STYLE, SERIES_COLORS, Style, fmt } from "./svg.js";

export const FIGURE_KINDS = [
  "hist",
  "rate_vs_N",
  "slope_vs_beta",
  "variance_ladder",
  "gap_vs_N",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface FigureSpec {
  kind: FigureKind;
  inputs: string[];
  output: string;
  style?: Partial<Style> & { bins?: number };
}

function requireInputs(spec: FigureSpec, atLeast = 1): void {
  if (spec.inputs.length < atLeast) {
    throw new SchemaError(
      `figure '${spec.kind}' needs at least ${atLeast} input file(s)`,
    );
  }
}

function mergedStyle(spec: FigureSpec, defaults: Partial<Style>): Style {
  return { ...DEFAULT_STYLE, ...defaults, ...spec.style };
}

function histogram(values: number[], bins: number) {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const width = hi > lo ? (hi - lo) / bins : 1;
  const counts = new Array<number>(bins).fill(0);
  for (const v of values) {
    const i = Math.min(bins - 1, Math.floor((v - lo) / width));
    counts[i] += 1;
  }
  return counts.map((count, i) => ({
    x0: lo + i * width,
    x1: lo + (i + 1) * width,
    count,
  }));
}

function renderHist(spec: FigureSpec): string {
  requireInputs(spec);
  const table = loadCsv(spec.inputs[0]);
  const values = numericColumn(table, "magnetisation");
  const bins = histogram(values, spec.style?.bins ?? 40);
  const style = mergedStyle(spec, {
    title: "Magnetisation histogram",
    xLabel: "magnetisation",
    yLabel: "count",
  });
  const chart = new Chart(
    style,
    new Axis([bins[0].x0, bins[bins.length - 1].x1], false, 0.02),
    new Axis([0, Math.max(...bins.map((b) => b.count))], false, 0.02),
  );
  chart.bars(bins, SERIES_COLORS[0]);
  return chart.render();
}

function renderRateVsN(spec: FigureSpec): string {
  requireInputs(spec);
  const table = loadCsv(spec.inputs[0]);
  const sides = numericColumn(table, "N");
  const rates = numericColumn(table, "rate");
  const errs = optionalColumn(table, "stderr");
  const bound = optionalColumn(table, "upper_bound_only");
  const points = sides.map((x, i) => ({
    x,
    y: rates[i],
    err: errs?.[i],
    open: bound ? bound[i] !== 0 : false,
  }));
  const style = mergedStyle(spec, {
    title: "Surface-order rate vs side",
    xLabel: "N",
    yLabel: "rate",
  });
  const chart = new Chart(
    style,
    new Axis(sides, style.logX),
    new Axis(rates, style.logY),
  );
  chart.polyline(points, SERIES_COLORS[0], 1);
  chart.errorSeries(points, SERIES_COLORS[0]);
  if (points.some((p) => p.open)) {
    chart.annotate("open markers: upper bound only", 0.04, 0.06);
  }
  return chart.render();
}

function renderSlopeVsBeta(spec: FigureSpec): string {
  requireInputs(spec);
  const table = loadCsv(spec.inputs[0]);
  const betas = numericColumn(table, "beta");
  const slopes = numericColumn(table, "slope");
  const errs = optionalColumn(table, "stderr");
  const points = betas.map((x, i) => ({ x, y: slopes[i], err: errs?.[i] }));
  const style = mergedStyle(spec, {
    title: "Contour decay slope vs coupling",
    xLabel: "beta",
    yLabel: "slope",
  });
  const chart = new Chart(
    style,
    new Axis(betas, style.logX),
    new Axis(slopes, style.logY),
  );
  chart.polyline(points, SERIES_COLORS[1], 1);
  chart.errorSeries(points, SERIES_COLORS[1]);
  return chart.render();
}

/** Ordinary least squares in log-log coordinates; returns slope ± stderr. */
export function logLogFit(x: number[], y: number[]): { slope: number; stderr: number; intercept: number } {
  const lx = x.map(Math.log);
  const ly = y.map(Math.log);
  const n = lx.length;
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (lx[i] - mx) ** 2;
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx === 0) {
    throw new SchemaError("variance ladder needs at least two distinct scales");
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  let rss = 0;
  for (let i = 0; i < n; i++) {
    rss += (ly[i] - intercept - slope * lx[i]) ** 2;
  }
  const stderr = n > 2 ? Math.sqrt(rss / (n - 2) / sxx) : 0;
  return { slope, stderr, intercept };
}

function renderVarianceLadder(spec: FigureSpec): string {
  requireInputs(spec);
  const table = loadCsv(spec.inputs[0]);
  const scales = numericColumn(table, "scale");
  const variances = numericColumn(table, "variance");
  const errs = optionalColumn(table, "stderr");
  if (scales.some((s) => s <= 0) || variances.some((v) => v <= 0)) {
    throw new SchemaError(
      `${table.path}: columns 'scale' and 'variance' must be positive for a log-log ladder`,
    );
  }
  const fit = logLogFit(scales, variances);
  const points = scales.map((x, i) => ({ x, y: variances[i], err: errs?.[i] }));
  const style = mergedStyle(spec, {
    title: "Variance ladder",
    xLabel: "scale",
    yLabel: "variance",
    logX: true,
    logY: true,
  });
  const chart = new Chart(style, new Axis(scales, true), new Axis(variances, true));
  const guide = [Math.min(...scales), Math.max(...scales)].map((x) => ({
    x,
    y: Math.exp(fit.intercept + fit.slope * Math.log(x)),
  }));
  chart.line(guide[0].x, guide[0].y, guide[1].x, guide[1].y, SERIES_COLORS[2], 1.5, "6 4");
  chart.errorSeries(points, SERIES_COLORS[0]);
  chart.annotate(
    `slope = ${fit.slope.toFixed(2)} ± ${fit.stderr.toFixed(2)}`,
    0.05,
    0.08,
    SERIES_COLORS[2],
  );
  return chart.render();
}

function renderGapVsN(spec: FigureSpec): string {
  requireInputs(spec);
  const reports = spec.inputs.map(loadGapReport).sort((a, b) => a.side - b.side);
  const usable = reports.filter((r) => Number.isFinite(r.rate));
  if (usable.length === 0) {
    throw new SchemaError(
      "no finite relaxation-rate estimates among the gap reports " +
        `(${reports.length} inconclusive)`,
    );
  }
  const points = usable.map((r) => ({
    x: r.side,
    y: r.rate,
    err: Number.isFinite(r.stderr) ? r.stderr : undefined,
    open: r.inconclusive,
  }));
  const style = mergedStyle(spec, {
    title: "Relaxation rate vs side",
    xLabel: "N",
    yLabel: "rate",
    logY: true,
  });
  const chart = new Chart(
    style,
    new Axis(points.map((p) => p.x), style.logX),
    new Axis(points.map((p) => p.y), style.logY),
  );
  chart.polyline(points, SERIES_COLORS[3], 1);
  chart.errorSeries(points, SERIES_COLORS[3]);
  const skipped = reports.length - usable.length;
  if (skipped > 0) {
    chart.annotate(`${skipped} inconclusive report(s) omitted`, 0.04, 0.06);
  }
  return chart.render();
}

export function renderFigure(spec: FigureSpec): string {
  switch (spec.kind) {
    case "hist":
      return renderHist(spec);
    case "rate_vs_N":
      return renderRateVsN(spec);
    case "slope_vs_beta":
      return renderSlopeVsBeta(spec);
    case "variance_ladder":
      return renderVarianceLadder(spec);
    case "gap_vs_N":
      return renderGapVsN(spec);
    default:
      throw new SchemaError(`unknown figure kind '${(spec as FigureSpec).kind}'`);
  }
}

export { fmt };
