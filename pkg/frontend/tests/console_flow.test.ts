// Scripted end-to-end console flow against a live service:
// label -> Doubt -> doubt-resolution -> consensus for the 3-labeler group,
// then the monitor views. Drives exactly the modules the browser uses.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { ROLE_ORDER, histogramOrder, legendRoles, renderHistogramSvg, renderProjectionSvg } from "../src/monitor.js";
import { LabelingQueue } from "../src/queue.js";
import { clampRegion, fullSpan, snapRegion } from "../src/timeline.js";
import type { IterationSummary, WorklistItem } from "../src/types.js";

const PORT = 8930 + Math.floor(Math.random() * 400);
const BASE = `http://127.0.0.1:${PORT}`;
const WINDOW = {
  node_id: "sim00",
  window_start: "2024-01-08T00:00:00+00:00",
  window_end: "2024-01-09T00:00:00+00:00",
};

let service: ChildProcess;
let workdir: string;
let truth: Record<string, number>;

const operator = new ApiClient({ baseUrl: BASE, token: "op-token" });
const clients = {
  ana: new ApiClient({ baseUrl: BASE, token: "tok-ana" }),
  ben: new ApiClient({ baseUrl: BASE, token: "tok-ben" }),
  cam: new ApiClient({ baseUrl: BASE, token: "tok-cam" }),
  dee: new ApiClient({ baseUrl: BASE, token: "tok-dee" }),
  eli: new ApiClient({ baseUrl: BASE, token: "tok-eli" }),
};

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      await operator.health();
      return;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
  }
  throw new Error(`service on ${BASE} did not come up`);
}

/** Submit one full-span label the way the console does: through the queue
 * state machine and the timeline region helpers. */
async function labelThroughConsole(
  api: ApiClient,
  queue: LabelingQueue,
  item: WorklistItem,
  classId: number,
): Promise<void> {
  const spec = { duration: item.duration ?? 10, width: 600 };
  const region = snapRegion(spec, clampRegion(spec, fullSpan(spec)));
  queue.beginSubmit(item.audio_id);
  const response = await api.submitAnnotations(item.audio_id, [
    { class_id: classId, onset: region.onset, offset: region.offset },
  ]);
  queue.resolveSubmit(item.audio_id, response);
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "listenloop-console-"));
  service = spawn(
    "python3",
    [join(__dirname, "..", "scripts", "test_service.py"), "--port", String(PORT), "--dir", workdir],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitForService();
  truth = JSON.parse(readFileSync(join(workdir, "truth.json"), "utf-8"));
}, 60000);

afterAll(() => {
  service?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

describe("console flow against the live service", () => {
  let first: IterationSummary;
  let disputedAudio: string;

  it("operator starts an iteration and both groups get half each", async () => {
    first = await operator.createIteration({ ...WINDOW, budget: 8 });
    expect(first.proposal_count).toBe(8);
    expect(first.path).toBe("bootstrap");

    const ana = await clients.ana.proposals(first.iteration_id, "ana");
    const dee = await clients.dee.proposals(first.iteration_id, "dee");
    expect(ana.items).toHaveLength(4);
    expect(dee.items).toHaveLength(4);
    const overlap = ana.items.filter((a) => dee.items.some((d) => d.audio_id === a.audio_id));
    expect(overlap).toHaveLength(0);
  });

  it("group isolation surfaces a 409 with retry guidance", async () => {
    const dee = await clients.dee.proposals(first.iteration_id, "dee");
    const foreign = dee.items[0]!;
    const attempt = clients.ana.submitAnnotations(foreign.audio_id, [
      { class_id: truth[foreign.audio_id]!, onset: 0, offset: 10 },
    ]);
    await expect(attempt).rejects.toSatisfy((error: unknown) => {
      expect(error).toBeInstanceOf(ApiError);
      const apiError = error as ApiError;
      expect(apiError.status).toBe(409);
      expect(apiError.guidance).toMatch(/group/);
      return true;
    });
  });

  it("label -> Doubt -> doubt-resolution -> consensus for the 3-labeler group", async () => {
    const { doubt_class_id } = await clients.ana.ontology();
    const anaQueue = new LabelingQueue((await clients.ana.proposals(first.iteration_id, "ana")).items);
    const benQueue = new LabelingQueue((await clients.ben.proposals(first.iteration_id, "ben")).items);
    const camQueue = new LabelingQueue((await clients.cam.proposals(first.iteration_id, "cam")).items);

    // the disputed audio: ana labels the true class, ben picks a wrong one,
    // cam is unsure and marks Doubt
    const disputed = anaQueue.current()!.item;
    disputedAudio = disputed.audio_id;
    const trueClass = truth[disputedAudio]!;
    const wrongClass = Object.values(truth).find((c) => c !== trueClass)!;

    await labelThroughConsole(clients.ana, anaQueue, disputed, trueClass);
    await labelThroughConsole(clients.ben, benQueue, benQueue.get(disputedAudio)!.item, wrongClass);
    await labelThroughConsole(clients.cam, camQueue, camQueue.get(disputedAudio)!.item, doubt_class_id);

    // the disputed item left every queue
    expect(anaQueue.get(disputedAudio)!.state).toBe("submitted");
    expect((await clients.cam.proposals(first.iteration_id, "cam")).items.map((i) => i.audio_id))
      .not.toContain(disputedAudio);

    // everyone finishes the rest of their queue with the true class
    for (const [name, queue] of [["ana", anaQueue], ["ben", benQueue], ["cam", camQueue]] as const) {
      let entry = queue.current();
      while (entry) {
        await labelThroughConsole(clients[name], queue, entry.item, truth[entry.item.audio_id]!);
        entry = queue.current();
      }
      expect(queue.isDone()).toBe(true);
    }
    const g2Queues = {
      dee: new LabelingQueue((await clients.dee.proposals(first.iteration_id, "dee")).items),
      eli: new LabelingQueue((await clients.eli.proposals(first.iteration_id, "eli")).items),
    };
    for (const name of ["dee", "eli"] as const) {
      let entry = g2Queues[name].current();
      while (entry) {
        await labelThroughConsole(clients[name], g2Queues[name], entry.item, truth[entry.item.audio_id]!);
        entry = g2Queues[name].current();
      }
    }

    // before resolution the disputed audio cannot reach consensus: one vote
    // for the true class, one wrong, one Doubt
    const midway = await operator.runConsensus(first.iteration_id);
    expect(midway.outcomes).toBe(8);
    expect(midway.promoted).toBe(7);

    // cam's Doubt shows up in their worklist, oldest first, then resolves
    const doubts = await clients.cam.doubts("cam");
    expect(doubts.items).toHaveLength(1);
    expect(doubts.items[0]!.audio_id).toBe(disputedAudio);
    const resolution = await clients.cam.resolveDoubt(doubts.items[0]!.chunk_id, {
      class_id: trueClass,
    });
    expect(resolution.label).toBe(trueClass); // consensus re-ran on the spot
    expect((await clients.cam.doubts("cam")).items).toHaveLength(0);

    // final consensus: all eight promoted, the disputed one decided by 2/3
    const final = await operator.runConsensus(first.iteration_id);
    expect(final.promoted).toBe(8);
    expect(final.consensus_yield).toBe(1.0);
    const status = await operator.iteration(first.iteration_id);
    expect(status.promoted_count).toBe(8);
  });

  it("suggested classes open next iteration, not the current one", async () => {
    const suggestion = await clients.ana.suggestClass("Distant thunder");
    expect(suggestion.status).toBe("approved");
    expect(suggestion.available_from_seq).toBe(2);
    const again = clients.ben.suggestClass("Distant thunder");
    await expect(again).rejects.toSatisfy((error: unknown) => {
      expect((error as ApiError).status).toBe(409);
      return true;
    });
  });

  it("monitor view shows exactly three roles and the API's histogram order", async () => {
    const second = await operator.createIteration({ ...WINDOW, budget: 8 });
    expect(second.path).toBe("committee");
    expect(second.medoid_count).toBeGreaterThan(0);

    const projection = await operator.projection(second.iteration_id);
    const rolesInPayload = new Set(projection.points.map((p) => p.role));
    expect([...rolesInPayload].sort()).toEqual(["discarded", "medoid", "proposed"]);
    const medoidPoints = projection.points.filter((p) => p.role === "medoid");
    expect(medoidPoints).toHaveLength(second.medoid_count);
    const proposedPoints = projection.points.filter((p) => p.role === "proposed");
    expect(proposedPoints).toHaveLength(second.proposal_count);

    const svg = renderProjectionSvg(projection);
    expect(legendRoles(svg)).toEqual([...ROLE_ORDER]); // exactly three roles
    expect(svg).toContain(`medoid (${second.medoid_count})`);

    const histogram = await operator.histogram(50);
    expect(histogram.entries.length).toBeGreaterThan(0);
    expect(histogram.entries.length).toBeLessThanOrEqual(50);
    const counts = histogram.entries.map((e) => e.count);
    expect([...counts].sort((a, b) => b - a)).toEqual(counts); // descending
    // 8 audios x (3 + 2 annotators split across groups) = 20 chunks total
    expect(counts.reduce((a, b) => a + b, 0)).toBe(20);

    const histogramSvg = renderHistogramSvg(histogram);
    expect(histogramOrder(histogramSvg)).toEqual(histogram.entries.map((e) => e.name));
  });
});
