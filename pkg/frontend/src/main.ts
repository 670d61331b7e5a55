// Browser entry: wires the API client, queue, timeline and monitor modules
// to the DOM. All decisions live in those modules; this file is glue.

import { ApiClient, ApiError } from "./api.js";
import { LabelingQueue } from "./queue.js";
import {
  clampRegion,
  describeRegion,
  dragHandle,
  fullSpan,
  secondsToPx,
  snapRegion,
  type Region,
  type TimelineSpec,
} from "./timeline.js";
import { renderHistogramSvg, renderProjectionSvg } from "./monitor.js";
import type { OntologyPayload, WorklistItem } from "./types.js";

interface Session {
  api: ApiClient;
  labeler: string;
  iterationId: string;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(message: string, isError = false): void {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = message;
  bar.className = isError ? "status error" : "status";
}

let session: Session | null = null;
let queue: LabelingQueue | null = null;
let ontology: OntologyPayload | null = null;
let region: Region = { onset: 0, offset: 10 };
let currentItem: WorklistItem | null = null;

const STRIP: TimelineSpec = { duration: 10, width: 600 };

function renderTimeline(): void {
  const strip = el<HTMLDivElement>("timeline");
  const spec = { ...STRIP, duration: currentItem?.duration ?? 10 };
  const left = secondsToPx(spec, region.onset);
  const right = secondsToPx(spec, region.offset);
  el<HTMLDivElement>("region").style.left = `${left}px`;
  el<HTMLDivElement>("region").style.width = `${Math.max(right - left, 2)}px`;
  el<HTMLSpanElement>("region-label").textContent = describeRegion(region);
  strip.dataset["duration"] = String(spec.duration);
}

function attachHandleDrag(handleId: string, which: "onset" | "offset"): void {
  const handle = el<HTMLDivElement>(handleId);
  handle.addEventListener("pointerdown", (down) => {
    down.preventDefault();
    const spec = { ...STRIP, duration: currentItem?.duration ?? 10 };
    let lastX = down.clientX;
    const move = (ev: PointerEvent) => {
      region = dragHandle(spec, region, which, ev.clientX - lastX);
      lastX = ev.clientX;
      renderTimeline();
    };
    const up = () => {
      region = snapRegion(spec, region);
      renderTimeline();
      window.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
    };
    window.addEventListener("pointermove", move);
    window.addEventListener("pointerup", up);
  });
}

function renderClassPicker(): void {
  if (!ontology) return;
  const picker = el<HTMLSelectElement>("class-picker");
  picker.innerHTML = "";
  for (const cls of ontology.classes) {
    if (!cls.active) continue;
    const option = document.createElement("option");
    option.value = String(cls.class_id);
    option.textContent = cls.name;
    picker.appendChild(option);
  }
}

function showCurrentItem(): void {
  if (!queue) return;
  const entry = queue.current();
  el<HTMLSpanElement>("quota").textContent = queue.quotaIndicator();
  if (!entry) {
    currentItem = null;
    el<HTMLDivElement>("labeling-card").hidden = true;
    setStatus("Queue complete. Nice work.");
    return;
  }
  currentItem = entry.item;
  el<HTMLDivElement>("labeling-card").hidden = false;
  el<HTMLSpanElement>("item-title").textContent = entry.item.filename;
  el<HTMLSpanElement>("item-agreement").textContent = `agreement ${(entry.agreement * 100).toFixed(0)}%`;
  const audio = el<HTMLAudioElement>("player");
  audio.src = entry.item.audio_url;
  region = fullSpan({ ...STRIP, duration: entry.item.duration ?? 10 });
  renderTimeline();
  if (entry.error) {
    setStatus(entry.error, true);
  }
}

async function submit(classId: number): Promise<void> {
  if (!session || !queue || !currentItem) return;
  const audioId = currentItem.audio_id;
  const spec = { ...STRIP, duration: currentItem.duration ?? 10 };
  const clamped = clampRegion(spec, region);
  queue.beginSubmit(audioId);
  showCurrentItem(); // optimistic: move on immediately
  try {
    const response = await session.api.submitAnnotations(audioId, [
      { class_id: classId, onset: clamped.onset, offset: clamped.offset },
    ]);
    queue.resolveSubmit(audioId, response);
    setStatus(`Saved ${audioId} (agreement ${(response.agreement * 100).toFixed(0)}%)`);
  } catch (error) {
    const message =
      error instanceof ApiError ? `${error.detail} — ${error.guidance}` : String(error);
    queue.failSubmit(audioId, message);
  }
  showCurrentItem();
}

async function refreshQueue(): Promise<void> {
  if (!session) return;
  const payload = await session.api.proposals(session.iterationId, session.labeler);
  queue = new LabelingQueue(payload.items);
  showCurrentItem();
}

async function refreshDoubts(): Promise<void> {
  if (!session) return;
  const payload = await session.api.doubts(session.labeler);
  const list = el<HTMLUListElement>("doubt-list");
  list.innerHTML = "";
  for (const item of payload.items) {
    const li = document.createElement("li");
    li.textContent = `${item.audio_id} [${item.onset}s–${item.offset}s]`;
    const resolve = document.createElement("button");
    resolve.textContent = "resolve with selected class";
    resolve.addEventListener("click", async () => {
      const classId = Number(el<HTMLSelectElement>("class-picker").value);
      await session!.api.resolveDoubt(item.chunk_id, { class_id: classId });
      await refreshDoubts();
    });
    li.appendChild(resolve);
    list.appendChild(li);
  }
  el<HTMLSpanElement>("doubt-count").textContent = String(payload.items.length);
}

async function refreshMonitor(): Promise<void> {
  if (!session) return;
  const iterationId = el<HTMLInputElement>("monitor-iteration").value || session.iterationId;
  try {
    const projection = await session.api.projection(iterationId);
    el<HTMLDivElement>("projection-host").innerHTML = renderProjectionSvg(projection);
  } catch (error) {
    el<HTMLDivElement>("projection-host").innerHTML =
      `<p class="empty">No projection for ${iterationId}</p>`;
  }
  const histogram = await session.api.histogram(50);
  el<HTMLDivElement>("histogram-host").innerHTML = renderHistogramSvg(histogram);
}

async function connect(): Promise<void> {
  const baseUrl = el<HTMLInputElement>("base-url").value || window.location.origin;
  const token = el<HTMLInputElement>("token").value;
  const labeler = el<HTMLInputElement>("labeler").value;
  const iterationId = el<HTMLInputElement>("iteration").value;
  const api = new ApiClient({ baseUrl, token });
  await api.health();
  ontology = await api.ontology();
  session = { api, labeler, iterationId };
  renderClassPicker();
  await refreshQueue();
  await refreshDoubts();
  setStatus(`Connected as ${labeler}`);
}

export function boot(): void {
  attachHandleDrag("handle-onset", "onset");
  attachHandleDrag("handle-offset", "offset");
  el<HTMLButtonElement>("connect").addEventListener("click", () => {
    connect().catch((error) => setStatus(String(error), true));
  });
  el<HTMLButtonElement>("submit-label").addEventListener("click", () => {
    const classId = Number(el<HTMLSelectElement>("class-picker").value);
    void submit(classId);
  });
  el<HTMLButtonElement>("mark-doubt").addEventListener("click", () => {
    if (!ontology) return;
    void submit(ontology.doubt_class_id).then(refreshDoubts);
  });
  el<HTMLButtonElement>("suggest").addEventListener("click", async () => {
    if (!session) return;
    const name = el<HTMLInputElement>("suggest-name").value.trim();
    if (!name) return;
    try {
      const result = await session.api.suggestClass(name);
      setStatus(
        `Suggested "${result.name}" (${result.status}); available from iteration ` +
          `${result.available_from_seq ?? "later"} — not the current one.`,
      );
    } catch (error) {
      const message =
        error instanceof ApiError ? `${error.detail} — ${error.guidance}` : String(error);
      setStatus(message, true);
    }
  });
  el<HTMLButtonElement>("monitor-refresh").addEventListener("click", () => {
    void refreshMonitor().catch((error) => setStatus(String(error), true));
  });
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
