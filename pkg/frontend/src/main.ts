/** DOM wiring for the design studio: sliders in, tables and plots out. */

import { DesignApi } from "./api.js";
import { SessionState, designSignature } from "./state.js";
import {
  LABEL_ORDER,
  PARAM_ORDER,
  buildHistograms,
  buildParallelCoords,
  buildTableRows,
  buildValidationRows,
  formatValue,
} from "./views.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function toast(message: string, retry?: () => void): void {
  const host = document.getElementById("toasts")!;
  const box = el("div", { class: "toast" }, message);
  if (retry) {
    const button = el("button", {}, "retry");
    button.addEventListener("click", () => {
      host.removeChild(box);
      retry();
    });
    box.appendChild(button);
  }
  host.appendChild(box);
  setTimeout(() => box.parentNode && host.removeChild(box), 6000);
}

export function startApp(baseUrl: string): void {
  const api = new DesignApi(baseUrl);
  const state = new SessionState(api);
  let plotMode: "parallel" | "histogram" = "parallel";

  const targetsHost = document.getElementById("targets")!;
  const tableHost = document.getElementById("table")!;
  const plotHost = document.getElementById("plot")!;
  const pinsHost = document.getElementById("pins")!;
  const statusHost = document.getElementById("status")!;
  const generateButton = document.getElementById("generate") as HTMLButtonElement;
  const validateButton = document.getElementById("validate") as HTMLButtonElement;
  const countInput = document.getElementById("count") as HTMLInputElement;
  const plotToggle = document.getElementById("plot-toggle") as HTMLButtonElement;

  function renderTargets(): void {
    if (!state.ranges) return;
    targetsHost.replaceChildren();
    for (const name of LABEL_ORDER) {
      const [lo, hi] = state.ranges.labels[name];
      const row = el("div", { class: "slider-row" });
      row.appendChild(el("label", {}, name));
      const slider = el("input", {
        type: "range",
        min: String(lo),
        max: String(hi),
        step: String((hi - lo) / 200),
        value: String(state.targets[name]),
      });
      const readout = el("span", { class: "readout" }, formatValue(state.targets[name], 3));
      slider.addEventListener("input", () => {
        state.setTarget(name, Number(slider.value));
        readout.textContent = formatValue(state.targets[name], 3);
      });
      row.appendChild(slider);
      row.appendChild(readout);
      targetsHost.appendChild(row);
    }
  }

  function renderTable(): void {
    const rows = buildTableRows(state.designs, designSignature);
    const table = el("table");
    const head = el("tr");
    for (const name of [...PARAM_ORDER, ...LABEL_ORDER, "dist", "pin"]) {
      head.appendChild(el("th", {}, name));
    }
    table.appendChild(head);
    for (const row of rows) {
      const tr = el("tr", { class: row.invalid ? "invalid" : "" });
      row.cells.forEach((cell, index) => {
        const td = el("td", {}, cell);
        if (index === 0 && row.invalid) {
          td.prepend(el("span", { class: "badge", title: "outside the valid design box" }, "invalid"));
        }
        tr.appendChild(td);
      });
      for (const cell of row.labelCells) tr.appendChild(el("td", {}, cell));
      tr.appendChild(el("td", {}, row.distance));
      const pinCell = el("td");
      const pin = el("button", { class: "pin" }, state.pinned.has(row.signature) ? "unpin" : "pin");
      pin.disabled = row.invalid;
      pin.addEventListener("click", () => state.togglePin(row.design));
      pinCell.appendChild(pin);
      tr.appendChild(pinCell);
      table.appendChild(tr);
    }
    tableHost.replaceChildren(table);
  }

  function renderPlot(): void {
    if (!state.ranges) return;
    plotHost.replaceChildren();
    if (plotMode === "histogram") {
      renderHistograms();
      return;
    }
    const model = buildParallelCoords(state.designs, state.ranges);
    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${model.width} ${model.height}`);
    const distances = model.lines
      .map((line) => line.distance)
      .filter((d): d is number => d !== null);
    const maxDistance = distances.length ? Math.max(...distances) : 1;
    for (const line of model.lines) {
      const poly = document.createElementNS(SVG_NS, "polyline");
      poly.setAttribute("points", line.points.map((p) => `${p.x},${p.y}`).join(" "));
      poly.setAttribute("fill", "none");
      if (line.invalid) {
        poly.setAttribute("class", "line-invalid");
      } else {
        const t = line.distance === null ? 1 : line.distance / (maxDistance || 1);
        poly.setAttribute("stroke", `hsl(${Math.round(210 - 170 * t)}, 80%, 45%)`);
        poly.setAttribute("stroke-opacity", "0.55");
      }
      svg.appendChild(poly);
    }
    for (const axis of model.axes) {
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(axis.x));
      line.setAttribute("x2", String(axis.x));
      line.setAttribute("y1", "20");
      line.setAttribute("y2", String(model.height - 20));
      line.setAttribute("class", "axis");
      svg.appendChild(line);
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(axis.x));
      label.setAttribute("y", "14");
      label.setAttribute("text-anchor", "middle");
      label.textContent = axis.name;
      svg.appendChild(label);
      for (const tick of axis.ticks) {
        const text = document.createElementNS(SVG_NS, "text");
        text.setAttribute("x", String(axis.x + 4));
        text.setAttribute("y", String(tick.y));
        text.setAttribute("class", "tick");
        text.textContent = tick.text;
        svg.appendChild(text);
      }
    }
    plotHost.appendChild(svg);
  }

  function renderHistograms(): void {
    if (!state.ranges) return;
    const models = buildHistograms(state.designs, state.ranges);
    const grid = el("div", { class: "hist-grid" });
    for (const model of models) {
      const maxCount = Math.max(1, ...model.counts);
      const box = el("div", { class: "hist" });
      box.appendChild(el("h4", {}, model.name));
      const bars = el("div", { class: "bars" });
      model.counts.forEach((count) => {
        const bar = el("div", { class: "bar" });
        bar.style.height = `${(100 * count) / maxCount}%`;
        bar.title = String(count);
        bars.appendChild(bar);
      });
      box.appendChild(bars);
      grid.appendChild(box);
    }
    plotHost.appendChild(grid);
  }

  function renderPins(): void {
    pinsHost.replaceChildren();
    const rows = buildValidationRows([...state.pinned.values()]);
    if (!rows.length) {
      pinsHost.appendChild(el("p", { class: "hint" }, "pin designs to compare against ground truth"));
      return;
    }
    const table = el("table");
    const head = el("tr");
    for (const name of [...PARAM_ORDER, "predicted", "ground truth", "delta"]) {
      head.appendChild(el("th", {}, name));
    }
    table.appendChild(head);
    rows.forEach((row) => {
      const tr = el("tr");
      for (const cell of row.paramCells) tr.appendChild(el("td", {}, cell));
      tr.appendChild(el("td", {}, row.predicted.join(" / ")));
      const oracleCell = el("td", {}, row.oracle.join(" / "));
      if (row.gClipped) oracleCell.appendChild(el("span", { class: "badge" }, "G clipped"));
      tr.appendChild(oracleCell);
      tr.appendChild(el("td", {}, row.deltas.join(" / ")));
      table.appendChild(tr);
    });
    pinsHost.appendChild(table);
  }

  function render(): void {
    generateButton.disabled = !state.canGenerate;
    validateButton.disabled = !state.canValidate;
    statusHost.textContent = state.busy
      ? "working..."
      : state.yieldRate === null
        ? ""
        : `yield ${(100 * state.yieldRate).toFixed(0)}% of ${state.count}`;
    renderTable();
    renderPlot();
    renderPins();
    if (state.lastError) {
      toast(state.lastError, () => void state.generate());
      state.lastError = null;
    }
  }

  state.subscribe(render);

  generateButton.addEventListener("click", () => void state.generate());
  validateButton.addEventListener("click", () => void state.validatePinned());
  countInput.addEventListener("input", () => state.setCount(Number(countInput.value)));
  plotToggle.addEventListener("click", () => {
    plotMode = plotMode === "parallel" ? "histogram" : "parallel";
    plotToggle.textContent = plotMode === "parallel" ? "histograms" : "parallel coords";
    renderPlot();
  });

  state
    .init()
    .then(() => {
      renderTargets();
      render();
    })
    .catch((error) => toast(`service unreachable: ${error}`, () => startApp(baseUrl)));
}

declare global {
  interface Window {
    DESIGN_SERVICE_URL?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("targets")) {
  startApp(window.DESIGN_SERVICE_URL ?? "http://127.0.0.1:8123");
}
