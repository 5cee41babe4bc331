/** Pure view-model builders: the DOM layer renders these without arithmetic
 * on label values (numbers pass through from service JSON unchanged). */

import { GeneratedDesign, Ranges, TargetLabels } from "./api.js";
import { PinnedDesign } from "./state.js";

export const PARAM_ORDER = ["R_A", "N_H", "D_M", "R_D", "R_L", "L_P"] as const;
export const LABEL_ORDER = ["U_M", "dp_rel", "G"] as const;

export interface TableRow {
  design: GeneratedDesign;
  cells: string[];
  labelCells: string[];
  distance: string;
  invalid: boolean;
  signature: string;
}

export function formatValue(value: number | null | undefined, digits = 4): string {
  if (value === null || value === undefined || Number.isNaN(value)) return "–";
  return Number(value).toPrecision(digits);
}

export function buildTableRows(
  designs: GeneratedDesign[],
  signatureOf: (design: GeneratedDesign) => string,
): TableRow[] {
  return designs.map((design) => ({
    design,
    cells: PARAM_ORDER.map((name) =>
      name === "N_H" ? String(design.params[name]) : formatValue(design.params[name]),
    ),
    labelCells: LABEL_ORDER.map((name) =>
      design.predicted_labels ? formatValue(design.predicted_labels[name]) : "–",
    ),
    distance: design.distance === null ? "–" : formatValue(design.distance, 3),
    invalid: !design.valid,
    signature: signatureOf(design),
  }));
}

// ------------------------------------------------------------ parallel coords

export interface PolylinePoint {
  x: number;
  y: number;
}

export interface ParallelCoordsModel {
  axes: { name: string; x: number; ticks: { y: number; text: string }[] }[];
  lines: { points: PolylinePoint[]; invalid: boolean; distance: number | null }[];
  width: number;
  height: number;
}

/** Map each design to a polyline over the six parameter axes.
 *
 * Axis scales come from the service-provided ranges, so an invalid design can
 * plot outside [0, height]; the table badge, not the plot, flags invalidity.
 */
export function buildParallelCoords(
  designs: GeneratedDesign[],
  ranges: Ranges,
  width = 760,
  height = 360,
  padding = 40,
): ParallelCoordsModel {
  const names = PARAM_ORDER.filter((name) => name in ranges.params);
  const step = names.length > 1 ? (width - 2 * padding) / (names.length - 1) : 0;
  const axisX = (index: number): number => padding + index * step;

  const scale = (name: string, value: number): number => {
    const [lo, hi] = ranges.params[name];
    const t = hi > lo ? (value - lo) / (hi - lo) : 0.5;
    return height - padding - t * (height - 2 * padding);
  };

  return {
    width,
    height,
    axes: names.map((name, index) => ({
      name,
      x: axisX(index),
      ticks: [0, 0.5, 1].map((t) => {
        const [lo, hi] = ranges.params[name];
        const value = lo + t * (hi - lo);
        return { y: scale(name, value), text: formatValue(value, 3) };
      }),
    })),
    lines: designs.map((design) => ({
      points: names.map((name, index) => ({
        x: axisX(index),
        y: scale(name, design.params[name]),
      })),
      invalid: !design.valid,
      distance: design.distance,
    })),
  };
}

// ---------------------------------------------------------------- histograms

export interface HistogramModel {
  name: string;
  binEdges: number[];
  counts: number[];
}

/** Per-parameter histogram over the currently generated designs. */
export function buildHistograms(
  designs: GeneratedDesign[],
  ranges: Ranges,
  bins = 12,
): HistogramModel[] {
  return PARAM_ORDER.filter((name) => name in ranges.params).map((name) => {
    const [lo, hi] = ranges.params[name];
    const edges = Array.from({ length: bins + 1 }, (_, i) => lo + ((hi - lo) * i) / bins);
    const counts = new Array(bins).fill(0);
    for (const design of designs) {
      if (!design.valid) continue;
      const value = design.params[name];
      const bin = Math.min(bins - 1, Math.max(0, Math.floor(((value - lo) / (hi - lo)) * bins)));
      counts[bin] += 1;
    }
    return { name, binEdges: edges, counts };
  });
}

// ------------------------------------------------------------- validation view

export interface ValidationRow {
  paramCells: string[];
  predicted: string[];
  oracle: string[];
  deltas: string[];
  gClipped: boolean;
}

export function buildValidationRows(pins: PinnedDesign[]): ValidationRow[] {
  return pins.map((pin) => {
    const predicted = pin.design.predicted_labels;
    const oracle = pin.validated;
    const deltas = LABEL_ORDER.map((name) => {
      if (!predicted || !oracle) return "–";
      return formatValue(oracle[name] - predicted[name], 2);
    });
    return {
      paramCells: PARAM_ORDER.map((name) =>
        name === "N_H" ? String(pin.design.params[name]) : formatValue(pin.design.params[name]),
      ),
      predicted: LABEL_ORDER.map((name) => (predicted ? formatValue(predicted[name]) : "–")),
      oracle: LABEL_ORDER.map((name) => (oracle ? formatValue(oracle[name]) : "–")),
      deltas,
      gClipped: oracle ? oracle.g_clipped : false,
    };
  });
}
