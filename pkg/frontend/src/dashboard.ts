/** Live model view: embedding scatter, per-round error curve, weight bars. */

import type { SessionState } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement(tag: string, attrs: Record<string, string | number>): SVGElement {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

function scatterPlot(state: SessionState, size = 260): SVGElement {
  const svg = svgElement("svg", {
    width: size,
    height: size,
    class: "scatter",
    viewBox: `0 0 ${size} ${size}`,
  });
  const points = state.projection;
  if (!points.length || state.responses_seen === 0) {
    const note = svgElement("text", { x: size / 2, y: size / 2, "text-anchor": "middle", class: "placeholder" });
    note.textContent = "no embedding yet";
    svg.appendChild(note);
    return svg;
  }
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const lo = Math.min(...xs, ...ys);
  const hi = Math.max(...xs, ...ys);
  const span = hi - lo || 1;
  const margin = 18;
  const scale = (v: number) => margin + ((v - lo) / span) * (size - 2 * margin);
  points.forEach(([x, y], i) => {
    svg.appendChild(
      svgElement("circle", { cx: scale(x), cy: size - scale(y), r: 4, class: "point" }),
    );
    const label = svgElement("text", {
      x: scale(x) + 5,
      y: size - scale(y) - 5,
      class: "point-label",
    });
    label.textContent = state.labels[i] ?? String(i);
    svg.appendChild(label);
  });
  return svg;
}

function errorCurve(state: SessionState, width = 320, height = 180): SVGElement {
  const svg = svgElement("svg", {
    width,
    height,
    class: "curve",
    viewBox: `0 0 ${width} ${height}`,
  });
  const history = state.metrics_history.filter((m) => m.error !== undefined);
  if (!history.length) {
    const note = svgElement("text", { x: width / 2, y: height / 2, "text-anchor": "middle", class: "placeholder" });
    note.textContent = "no rounds scored yet";
    svg.appendChild(note);
    return svg;
  }
  const margin = 24;
  const maxRound = Math.max(...history.map((m) => m.round), 1);
  const sx = (r: number) => margin + (r / maxRound) * (width - 2 * margin);
  const sy = (e: number) => height - margin - e * (height - 2 * margin);
  const path = history
    .map((m, i) => `${i === 0 ? "M" : "L"}${sx(m.round).toFixed(1)},${sy(m.error!).toFixed(1)}`)
    .join(" ");
  svg.appendChild(svgElement("path", { d: path, class: "curve-line", fill: "none" }));
  for (const m of history) {
    svg.appendChild(
      svgElement("circle", { cx: sx(m.round), cy: sy(m.error!), r: 3, class: "curve-point" }),
    );
  }
  const axis = svgElement("text", { x: margin, y: 14, class: "axis-label" });
  axis.textContent = `error by round (latest ${history[history.length - 1].error!.toFixed(3)})`;
  svg.appendChild(axis);
  return svg;
}

function weightBars(state: SessionState): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "weights";
  if (!state.weights.length) {
    const note = document.createElement("p");
    note.className = "placeholder";
    note.textContent = "no feature weights (nonparametric model)";
    wrap.appendChild(note);
    return wrap;
  }
  const maxW = Math.max(...state.weights, 1e-12);
  state.weights.forEach((w, k) => {
    const row = document.createElement("div");
    row.className = "weight-row";
    const name = document.createElement("span");
    name.className = "weight-name";
    name.textContent = `w${k}`;
    const bar = document.createElement("div");
    bar.className = "weight-bar";
    bar.style.width = `${(100 * w) / maxW}%`;
    bar.dataset.value = w.toPrecision(3);
    const value = document.createElement("span");
    value.className = "weight-value";
    value.textContent = w.toPrecision(3);
    row.append(name, bar, value);
    wrap.appendChild(row);
  });
  return wrap;
}

/** Rebuild the dashboard pane from a state snapshot. */
export function renderDashboard(container: HTMLElement, state: SessionState): void {
  container.textContent = "";
  const status = document.createElement("p");
  status.className = "status-line";
  status.textContent =
    `session ${state.session_id} · ${state.method} · round ${state.round} · ` +
    `${state.responses_seen} responses · ${state.status}`;
  container.appendChild(status);

  const panes = document.createElement("div");
  panes.className = "dashboard-panes";
  const left = document.createElement("div");
  left.appendChild(scatterPlot(state));
  const right = document.createElement("div");
  right.appendChild(errorCurve(state));
  right.appendChild(weightBars(state));
  panes.append(left, right);
  container.appendChild(panes);
}
