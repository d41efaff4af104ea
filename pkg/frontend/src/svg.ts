/**
 * Minimal deterministic SVG chart builder.
 *
 * Everything is plain string assembly with fixed-precision number
 * formatting, so a figure is a pure function of its data and style.
 */

export interface Style {
  width: number;
  height: number;
  title: string;
  xLabel: string;
  yLabel: string;
  logX: boolean;
  logY: boolean;
}

export const DEFAULT_STYLE: Style = {
  width: 640,
  height: 440,
  title: "",
  xLabel: "",
  yLabel: "",
  logX: false,
  logY: false,
};

const MARGIN = { top: 40, right: 24, bottom: 52, left: 68 };
const AXIS_COLOR = "#333333";
const GRID_COLOR = "#dddddd";
export const SERIES_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

export function fmt(x: number): string {
  if (x === 0) return "0";
  const s = x.toPrecision(6);
  return s.includes(".") && !s.includes("e")
    ? s.replace(/\.?0+$/, "")
    : s;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Round tick step to 1/2/5 times a power of ten. */
function niceStep(span: number, target: number): number {
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= raw) return mag * m;
  }
  return mag * 10;
}

function linearTicks(lo: number, hi: number): number[] {
  if (!(hi > lo)) return [lo];
  const step = niceStep(hi - lo, 5);
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(lo) - 1e-9); Math.pow(10, e) <= hi * (1 + 1e-9); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length >= 2 ? ticks : [lo, hi];
}

export class Axis {
  readonly lo: number;
  readonly hi: number;
  constructor(
    values: number[],
    readonly log: boolean,
    padFraction = 0.06,
  ) {
    const finite = values.filter((v) => Number.isFinite(v) && (!log || v > 0));
    if (finite.length === 0) {
      throw new Error("axis has no finite values");
    }
    let lo = Math.min(...finite);
    let hi = Math.max(...finite);
    if (log) {
      const pad = Math.pow(hi / lo, padFraction) || 1;
      this.lo = lo / pad;
      this.hi = hi * pad === lo / pad ? hi * 10 : hi * pad;
    } else {
      if (hi === lo) {
        lo -= Math.abs(lo) * 0.5 + 1;
        hi += Math.abs(hi) * 0.5 + 1;
      }
      const pad = (hi - lo) * padFraction;
      this.lo = lo - pad;
      this.hi = hi + pad;
    }
  }

  unit(v: number): number {
    return this.log
      ? (Math.log(v) - Math.log(this.lo)) / (Math.log(this.hi) - Math.log(this.lo))
      : (v - this.lo) / (this.hi - this.lo);
  }

  ticks(): number[] {
    return this.log ? logTicks(this.lo, this.hi) : linearTicks(this.lo, this.hi);
  }
}

export interface ErrorPoint {
  x: number;
  y: number;
  err?: number;
  open?: boolean;
}

export class Chart {
  private body: string[] = [];
  private readonly plotW: number;
  private readonly plotH: number;

  constructor(
    readonly style: Style,
    readonly xAxis: Axis,
    readonly yAxis: Axis,
  ) {
    this.plotW = style.width - MARGIN.left - MARGIN.right;
    this.plotH = style.height - MARGIN.top - MARGIN.bottom;
  }

  px(x: number): number {
    return MARGIN.left + this.xAxis.unit(x) * this.plotW;
  }

  py(y: number): number {
    return MARGIN.top + (1 - this.yAxis.unit(y)) * this.plotH;
  }

  private add(fragment: string): void {
    this.body.push(fragment);
  }

  line(x1: number, y1: number, x2: number, y2: number, color: string, width = 1.5, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.add(
      `<line x1="${fmt(this.px(x1))}" y1="${fmt(this.py(y1))}" x2="${fmt(this.px(x2))}" ` +
        `y2="${fmt(this.py(y2))}" stroke="${color}" stroke-width="${width}"${d}/>`,
    );
  }

  polyline(points: { x: number; y: number }[], color: string, width = 1.5): void {
    const coords = points
      .map((p) => `${fmt(this.px(p.x))},${fmt(this.py(p.y))}`)
      .join(" ");
    this.add(`<polyline points="${coords}" fill="none" stroke="${color}" stroke-width="${width}"/>`);
  }

  /** Markers with vertical error bars; open markers flag upper bounds. */
  errorSeries(points: ErrorPoint[], color: string): void {
    for (const p of points) {
      const cx = this.px(p.x);
      const cy = this.py(p.y);
      if (p.err !== undefined && p.err > 0) {
        const yLo = this.yAxis.log ? Math.max(p.y - p.err, this.yAxis.lo) : p.y - p.err;
        const top = this.py(p.y + p.err);
        const bot = this.py(yLo);
        this.add(
          `<line x1="${fmt(cx)}" y1="${fmt(top)}" x2="${fmt(cx)}" y2="${fmt(bot)}" ` +
            `stroke="${color}" stroke-width="1.2"/>` +
            `<line x1="${fmt(cx - 4)}" y1="${fmt(top)}" x2="${fmt(cx + 4)}" y2="${fmt(top)}" ` +
            `stroke="${color}" stroke-width="1.2"/>` +
            `<line x1="${fmt(cx - 4)}" y1="${fmt(bot)}" x2="${fmt(cx + 4)}" y2="${fmt(bot)}" ` +
            `stroke="${color}" stroke-width="1.2"/>`,
        );
      }
      const fill = p.open ? "white" : color;
      this.add(
        `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="4" fill="${fill}" ` +
          `stroke="${color}" stroke-width="1.5"/>`,
      );
    }
  }

  /** Histogram bars spanning [x0, x1) with the given height. */
  bars(bins: { x0: number; x1: number; count: number }[], color: string): void {
    const base = this.py(Math.max(0, this.yAxis.lo));
    for (const b of bins) {
      if (b.count <= 0) continue;
      const x = this.px(b.x0);
      const w = this.px(b.x1) - x;
      const y = this.py(b.count);
      this.add(
        `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(base - y)}" ` +
          `fill="${color}" fill-opacity="0.65" stroke="${color}" stroke-width="0.5"/>`,
      );
    }
  }

  annotate(text: string, xFrac: number, yFrac: number, color = AXIS_COLOR): void {
    const x = MARGIN.left + xFrac * this.plotW;
    const y = MARGIN.top + yFrac * this.plotH;
    this.add(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="13" fill="${color}" ` +
        `font-family="sans-serif">${escapeXml(text)}</text>`,
    );
  }

  render(): string {
    const { width, height, title, xLabel, yLabel } = this.style;
    const parts: string[] = [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}">`,
      `<rect width="${width}" height="${height}" fill="white"/>`,
    ];
    const x0 = MARGIN.left;
    const x1 = MARGIN.left + this.plotW;
    const y0 = MARGIN.top;
    const y1 = MARGIN.top + this.plotH;
    for (const t of this.xAxis.ticks()) {
      const px = this.px(t);
      parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y1}" stroke="${GRID_COLOR}"/>`,
        `<line x1="${fmt(px)}" y1="${y1}" x2="${fmt(px)}" y2="${y1 + 5}" stroke="${AXIS_COLOR}"/>`,
        `<text x="${fmt(px)}" y="${y1 + 20}" font-size="12" text-anchor="middle" ` +
          `font-family="sans-serif" fill="${AXIS_COLOR}">${fmt(t)}</text>`,
      );
    }
    for (const t of this.yAxis.ticks()) {
      const py = this.py(t);
      parts.push(
        `<line x1="${x0}" y1="${fmt(py)}" x2="${x1}" y2="${fmt(py)}" stroke="${GRID_COLOR}"/>`,
        `<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="${AXIS_COLOR}"/>`,
        `<text x="${x0 - 8}" y="${fmt(py + 4)}" font-size="12" text-anchor="end" ` +
          `font-family="sans-serif" fill="${AXIS_COLOR}">${fmt(t)}</text>`,
      );
    }
    parts.push(
      `<rect x="${x0}" y="${y0}" width="${this.plotW}" height="${this.plotH}" ` +
        `fill="none" stroke="${AXIS_COLOR}" stroke-width="1"/>`,
    );
    if (title) {
      parts.push(
        `<text x="${width / 2}" y="24" font-size="16" text-anchor="middle" ` +
          `font-family="sans-serif" fill="${AXIS_COLOR}">${escapeXml(title)}</text>`,
      );
    }
    if (xLabel) {
      parts.push(
        `<text x="${(x0 + x1) / 2}" y="${height - 12}" font-size="13" text-anchor="middle" ` +
          `font-family="sans-serif" fill="${AXIS_COLOR}">${escapeXml(xLabel)}</text>`,
      );
    }
    if (yLabel) {
      parts.push(
        `<text x="18" y="${(y0 + y1) / 2}" font-size="13" text-anchor="middle" ` +
          `font-family="sans-serif" fill="${AXIS_COLOR}" ` +
          `transform="rotate(-90 18 ${(y0 + y1) / 2})">${escapeXml(yLabel)}</text>`,
      );
    }
    parts.push(...this.body, "</svg>");
    return parts.join("\n");
  }
}
