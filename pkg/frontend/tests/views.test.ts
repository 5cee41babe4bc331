import { describe, expect, it } from "vitest";

import { GeneratedDesign, Ranges } from "../src/api.js";
import { designSignature } from "../src/state.js";
import {
  buildHistograms,
  buildParallelCoords,
  buildTableRows,
  buildValidationRows,
  formatValue,
} from "../src/views.js";

const RANGES: Ranges = {
  params: {
    R_A: [0.63, 0.83], N_H: [2, 10], D_M: [20, 45],
    R_D: [0.35, 0.55], R_L: [4, 12], L_P: [200, 900],
  },
  n_h_values: [2, 3, 4, 5, 6, 7, 8, 9, 10],
  labels: { U_M: [0.02, 0.15], dp_rel: [0.03, 0.05], G: [-1.2, 1.0] },
};

function design(valid: boolean): GeneratedDesign {
  return {
    params: { R_A: 0.73, N_H: 6, D_M: 32.5, R_D: 0.45, R_L: 8, L_P: 550 },
    valid,
    predicted_labels: valid ? { U_M: 0.0612345, dp_rel: 0.04, G: 0.1 } : null,
    distance: valid ? 0.123456 : null,
  };
}

describe("table rows", () => {
  it("flags invalid designs and passes label values through verbatim", () => {
    const rows = buildTableRows([design(true), design(false)], designSignature);
    expect(rows[0].invalid).toBe(false);
    expect(rows[1].invalid).toBe(true);
    expect(rows[1].labelCells).toEqual(["–", "–", "–"]);
    // formatting only reduces precision; it never rescales
    expect(rows[0].labelCells[0]).toBe("0.06123");
    expect(rows[0].cells[1]).toBe("6"); // hole count renders as an integer
  });
});

describe("parallel coordinates", () => {
  it("maps range endpoints to the vertical extent of each axis", () => {
    const low = design(true);
    low.params = { R_A: 0.63, N_H: 2, D_M: 20, R_D: 0.35, R_L: 4, L_P: 200 };
    const high = design(true);
    high.params = { R_A: 0.83, N_H: 10, D_M: 45, R_D: 0.55, R_L: 12, L_P: 900 };
    const model = buildParallelCoords([low, high], RANGES, 760, 360, 40);
    expect(model.axes).toHaveLength(6);
    for (const point of model.lines[0].points) expect(point.y).toBeCloseTo(320, 9);
    for (const point of model.lines[1].points) expect(point.y).toBeCloseTo(40, 9);
    expect(model.axes[0].x).toBe(40);
    expect(model.axes[5].x).toBe(720);
  });

  it("marks invalid designs so the renderer can badge them", () => {
    const model = buildParallelCoords([design(false)], RANGES);
    expect(model.lines[0].invalid).toBe(true);
  });
});

describe("histograms", () => {
  it("bins only valid designs over service-provided ranges", () => {
    const mid = design(true);
    const invalid = design(false);
    const models = buildHistograms([mid, mid, invalid], RANGES, 10);
    const dm = models.find((m) => m.name === "D_M")!;
    expect(dm.counts.reduce((a, b) => a + b, 0)).toBe(2);
    expect(dm.binEdges[0]).toBe(20);
    expect(dm.binEdges.at(-1)).toBe(45);
  });
});

describe("validation rows", () => {
  it("renders prediction, ground truth, and their delta", () => {
    const pin = {
      design: design(true),
      validated: { U_M: 0.0712345, dp_rel: 0.041, G: 1.0, g_clipped: true },
    };
    const rows = buildValidationRows([pin]);
    expect(rows[0].predicted[0]).toBe("0.06123");
    expect(rows[0].oracle[0]).toBe("0.07123");
    expect(Number(rows[0].deltas[0])).toBeCloseTo(0.01, 6);
    expect(rows[0].gClipped).toBe(true);
  });
});

describe("formatValue", () => {
  it("handles missing values", () => {
    expect(formatValue(null)).toBe("–");
    expect(formatValue(Number.NaN)).toBe("–");
    expect(formatValue(0.0399999, 3)).toBe("0.0400");
  });
});
