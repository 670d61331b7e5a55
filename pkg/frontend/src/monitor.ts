// Read-only monitor rendering: the iteration projection scatter and the
// tag-frequency histogram, as self-contained SVG strings. Pure functions so
// the views are testable without a browser; main.ts injects the markup.

import type { HistogramPayload, ProjectionPayload, ProjectionRole } from "./types.js";

export const ROLE_ORDER: readonly ProjectionRole[] = ["medoid", "proposed", "discarded"];

export const ROLE_STYLE: Record<ProjectionRole, { fill: string; shape: "dot" | "star" | "speck" }> = {
  medoid: { fill: "#e8790b", shape: "dot" },
  proposed: { fill: "#2a9d2a", shape: "star" },
  discarded: { fill: "#b5b5b5", shape: "speck" },
};

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

interface Extent {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

function extentOf(payload: ProjectionPayload): Extent {
  const xs = payload.points.map((p) => p.x);
  const ys = payload.points.map((p) => p.y);
  return {
    minX: Math.min(...xs, 0),
    maxX: Math.max(...xs, 1e-9),
    minY: Math.min(...ys, 0),
    maxY: Math.max(...ys, 1e-9),
  };
}

function starPath(cx: number, cy: number, r: number): string {
  const points: string[] = [];
  for (let i = 0; i < 10; i++) {
    const radius = i % 2 === 0 ? r : r / 2.4;
    const angle = (Math.PI / 5) * i - Math.PI / 2;
    points.push(`${(cx + radius * Math.cos(angle)).toFixed(2)},${(cy + radius * Math.sin(angle)).toFixed(2)}`);
  }
  return points.join(" ");
}

export interface ProjectionSvgOptions {
  width?: number;
  height?: number;
}

/** Scatter of one iteration with the three-role legend (always all three). */
export function renderProjectionSvg(
  payload: ProjectionPayload,
  options: ProjectionSvgOptions = {},
): string {
  const width = options.width ?? 640;
  const height = options.height ?? 480;
  const pad = 24;
  const legendHeight = 28;
  const extent = extentOf(payload);
  const spanX = extent.maxX - extent.minX || 1;
  const spanY = extent.maxY - extent.minY || 1;
  const sx = (x: number) => pad + ((x - extent.minX) / spanX) * (width - 2 * pad);
  const sy = (y: number) => height - legendHeight - pad - ((y - extent.minY) / spanY) * (height - legendHeight - 2 * pad);

  const counts: Record<ProjectionRole, number> = { medoid: 0, proposed: 0, discarded: 0 };
  const groups = ROLE_ORDER.map((role) => {
    const marks: string[] = [];
    for (const point of payload.points) {
      if (point.role !== role) continue;
      counts[role] += 1;
      const cx = sx(point.x);
      const cy = sy(point.y);
      const style = ROLE_STYLE[role];
      if (style.shape === "star") {
        marks.push(
          `<polygon points="${starPath(cx, cy, 6)}" fill="${style.fill}">` +
            `<title>${escapeXml(point.audio_id)}</title></polygon>`,
        );
      } else {
        const r = style.shape === "dot" ? 4 : 1.6;
        marks.push(
          `<circle cx="${cx.toFixed(2)}" cy="${cy.toFixed(2)}" r="${r}" fill="${style.fill}">` +
            `<title>${escapeXml(point.audio_id)}</title></circle>`,
        );
      }
    }
    return `<g class="role" data-role="${role}">${marks.join("")}</g>`;
  });

  const legend = ROLE_ORDER.map((role, i) => {
    const x = pad + i * 180;
    const y = height - legendHeight + 14;
    return (
      `<g class="legend-entry" data-role="${role}">` +
      `<circle cx="${x}" cy="${y - 4}" r="5" fill="${ROLE_STYLE[role].fill}"/>` +
      `<text x="${x + 12}" y="${y}" font-size="12">${role} (${counts[role]})</text>` +
      `</g>`
    );
  });

  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}"` +
    ` role="img" aria-label="Iteration ${escapeXml(payload.iteration_id)} projection">` +
    groups.join("") +
    `<g class="legend">${legend.join("")}</g>` +
    `</svg>`
  );
}

export interface HistogramSvgOptions {
  width?: number;
  barHeight?: number;
}

/** Horizontal bars in exactly the payload's order (most frequent first). */
export function renderHistogramSvg(
  payload: HistogramPayload,
  options: HistogramSvgOptions = {},
): string {
  const width = options.width ?? 640;
  const barHeight = options.barHeight ?? 18;
  const gap = 4;
  const labelWidth = 180;
  const height = payload.entries.length * (barHeight + gap) + gap;
  const max = Math.max(...payload.entries.map((e) => e.count), 1);

  const bars = payload.entries.map((entry, i) => {
    const y = gap + i * (barHeight + gap);
    const barWidth = ((width - labelWidth - 60) * entry.count) / max;
    return (
      `<g class="bar" data-name="${escapeXml(entry.name)}" data-count="${entry.count}">` +
      `<text x="${labelWidth - 8}" y="${y + barHeight - 5}" text-anchor="end" font-size="11">` +
      `${escapeXml(entry.name)}</text>` +
      `<rect x="${labelWidth}" y="${y}" width="${Math.max(barWidth, 1).toFixed(2)}"` +
      ` height="${barHeight}" fill="#3b7dd8"/>` +
      `<text x="${(labelWidth + Math.max(barWidth, 1) + 6).toFixed(2)}" y="${y + barHeight - 5}"` +
      ` font-size="11">${entry.count}</text>` +
      `</g>`
    );
  });

  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}"` +
    ` role="img" aria-label="Tag frequencies">` +
    bars.join("") +
    `</svg>`
  );
}

/** The roles named by a rendered projection's legend, in display order. */
export function legendRoles(svg: string): string[] {
  const roles: string[] = [];
  const pattern = /<g class="legend-entry" data-role="([a-z]+)">/g;
  let match: RegExpExecArray | null;
  while ((match = pattern.exec(svg)) !== null) {
    roles.push(match[1]!);
  }
  return roles;
}

/** Bar names in the order a rendered histogram displays them. */
export function histogramOrder(svg: string): string[] {
  const names: string[] = [];
  const pattern = /<g class="bar" data-name="([^"]*)"/g;
  let match: RegExpExecArray | null;
  while ((match = pattern.exec(svg)) !== null) {
    names.push(match[1]!);
  }
  return names;
}
