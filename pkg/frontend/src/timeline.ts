// Region math for the annotation timeline strip: a region is an
// onset/offset pair in seconds, edited by dragging its handles across a
// strip of known pixel width. All functions are pure so the drag logic is
// testable without a DOM.

export interface TimelineSpec {
  duration: number;
  width: number;
  minLength?: number;
}

export interface Region {
  onset: number;
  offset: number;
}

const DEFAULT_MIN_LENGTH = 0.1;

export function pxToSeconds(spec: TimelineSpec, px: number): number {
  return (px / spec.width) * spec.duration;
}

export function secondsToPx(spec: TimelineSpec, seconds: number): number {
  return (seconds / spec.duration) * spec.width;
}

export function fullSpan(spec: TimelineSpec): Region {
  return { onset: 0, offset: spec.duration };
}

function minLength(spec: TimelineSpec): number {
  return Math.min(spec.minLength ?? DEFAULT_MIN_LENGTH, spec.duration);
}

/** Force 0 <= onset < offset <= duration while honoring the minimum length. */
export function clampRegion(spec: TimelineSpec, region: Region): Region {
  const min = minLength(spec);
  let onset = Math.max(0, Math.min(region.onset, spec.duration - min));
  let offset = Math.max(onset + min, Math.min(region.offset, spec.duration));
  if (offset > spec.duration) {
    offset = spec.duration;
    onset = Math.min(onset, offset - min);
  }
  return { onset, offset };
}

export type Handle = "onset" | "offset";

/** Drag one handle by a pixel delta; the opposite edge stays put. */
export function dragHandle(
  spec: TimelineSpec,
  region: Region,
  handle: Handle,
  deltaPx: number,
): Region {
  const deltaSec = pxToSeconds(spec, deltaPx);
  const min = minLength(spec);
  if (handle === "onset") {
    const onset = Math.max(0, Math.min(region.onset + deltaSec, region.offset - min));
    return { onset, offset: region.offset };
  }
  const offset = Math.min(spec.duration, Math.max(region.offset + deltaSec, region.onset + min));
  return { onset: region.onset, offset };
}

/** Slide the whole region, preserving its length, clamped to the strip. */
export function dragRegion(spec: TimelineSpec, region: Region, deltaPx: number): Region {
  const length = region.offset - region.onset;
  const deltaSec = pxToSeconds(spec, deltaPx);
  const onset = Math.max(0, Math.min(region.onset + deltaSec, spec.duration - length));
  return { onset, offset: onset + length };
}

/** Snap both edges to a grid (default 0.1 s), keeping the region valid. */
export function snapRegion(spec: TimelineSpec, region: Region, step = 0.1): Region {
  const snapped = {
    onset: Math.round(region.onset / step) * step,
    offset: Math.round(region.offset / step) * step,
  };
  return clampRegion(spec, {
    onset: Number(snapped.onset.toFixed(6)),
    offset: Number(snapped.offset.toFixed(6)),
  });
}

export function describeRegion(region: Region): string {
  return `${region.onset.toFixed(1)}s – ${region.offset.toFixed(1)}s`;
}
