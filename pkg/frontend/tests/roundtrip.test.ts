/** Integration round trip against the real local service (see service.setup). */

import { describe, expect, it } from "vitest";

import { DesignApi } from "../src/api.js";
import { SessionState, designSignature } from "../src/state.js";
import { buildParallelCoords, buildTableRows } from "../src/views.js";

function api(): DesignApi {
  const url = process.env.DESIGN_SERVICE_URL;
  if (!url) throw new Error("service URL missing; globalSetup did not run");
  return new DesignApi(url);
}

describe("service round trip", () => {
  it("generates 100 designs for the grid-center target and renders within 2s", async () => {
    const state = new SessionState(api());
    await state.init();
    expect(state.ranges?.params.R_A).toEqual([0.63, 0.83]);

    state.targets = { U_M: 0.06, dp_rel: 0.04, G: 0.0 };
    state.setCount(100);

    const started = performance.now();
    await state.generate();
    const rows = buildTableRows(state.designs, designSignature);
    const plot = buildParallelCoords(state.designs, state.ranges!);
    const elapsed = performance.now() - started;

    expect(elapsed).toBeLessThan(2000);
    expect(rows).toHaveLength(100);
    expect(plot.lines).toHaveLength(100);
    expect(state.yieldRate).not.toBeNull();

    // invalid designs are explicitly badged, never silently displayed
    for (const row of rows) {
      const badged = row.invalid;
      const flagged = !row.design.valid;
      expect(badged).toBe(flagged);
    }
    const validRows = rows.filter((row) => !row.invalid);
    expect(validRows.length).toBeGreaterThan(0);
    for (const row of validRows) {
      expect(row.design.predicted_labels).not.toBeNull();
    }
  });

  it("round-trips a pinned design through oracle validation", async () => {
    const state = new SessionState(api());
    await state.init();
    state.targets = { U_M: 0.06, dp_rel: 0.04, G: 0.0 };
    state.setCount(50);
    await state.generate();

    const valid = state.designs.find((design) => design.valid);
    expect(valid).toBeDefined();
    state.togglePin(valid!);
    await state.validatePinned();

    const [pin] = state.pinned.values();
    expect(pin.validated).not.toBeNull();
    expect(pin.validated!.dp_rel).toBeGreaterThan(0.025);
    expect(pin.validated!.dp_rel).toBeLessThan(0.055);
  });

  it("rejects unachievable targets with a client-visible error", async () => {
    const state = new SessionState(api());
    await state.init();
    state.targets = { U_M: -1, dp_rel: 0.04, G: 0.0 };
    state.setCount(10);
    await state.generate();
    expect(state.lastError).toMatch(/U_M/);
    expect(state.designs).toHaveLength(0);
  });
});
