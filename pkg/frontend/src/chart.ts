/** Report chart shaping: a periodic report event becomes SVG line paths.
 *
 * Pure data-in, path-strings-out so the shaping logic is unit-testable;
 * the view layer just drops the result into an <svg>.
 */

import type { EventLine } from "./types.js";

export interface ChartSeries {
  sensor: string;
  points: [number, number][];
  path: string;
  color: string;
}

export interface ReportChart {
  windowFrom: number;
  windowTo: number;
  vMax: number;
  series: ChartSeries[];
  /** horizontal guide lines: [label, value, y] */
  guides: [string, number, number][];
  width: number;
  height: number;
}

const WIDTH = 560;
const HEIGHT = 220;
const PAD = 28;

const PALETTE = [
  "#58a6ff", "#3fb950", "#d29922", "#f85149", "#bc8cff",
  "#39c5cf", "#ff7b72", "#7ee787", "#ffa657", "#79c0ff",
];

export function buildReportChart(report: EventLine, vPlus = 2.0, vMinus = 1.0): ReportChart {
  const doc = JSON.parse(String(report.attrs.doc ?? '{"series":{}}')) as {
    series: Record<string, [number, number][]>;
  };
  const windowFrom = Number(report.attrs.window_from ?? 0);
  const windowTo = Number(report.attrs.window_to ?? windowFrom + 300000);
  const values = Object.values(doc.series).flat().map(([, v]) => v);
  const vMax = Math.max(vPlus * 1.2, ...values, 0.1);
  const x = (ts: number) =>
    PAD + ((ts - windowFrom) / Math.max(1, windowTo - windowFrom)) * (WIDTH - 2 * PAD);
  const y = (v: number) => HEIGHT - PAD - (v / vMax) * (HEIGHT - 2 * PAD);

  const series: ChartSeries[] = Object.entries(doc.series)
    .sort(([a], [b]) => (a < b ? -1 : 1))
    .map(([sensor, points], i) => ({
      sensor,
      points,
      color: PALETTE[i % PALETTE.length],
      path: points
        .map(([ts, v], j) => `${j === 0 ? "M" : "L"}${x(ts).toFixed(1)},${y(v).toFixed(1)}`)
        .join(" "),
    }));

  return {
    windowFrom,
    windowTo,
    vMax,
    series,
    guides: [
      ["V+", vPlus, y(vPlus)],
      ["V-", vMinus, y(vMinus)],
    ],
    width: WIDTH,
    height: HEIGHT,
  };
}
