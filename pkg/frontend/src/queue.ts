// The labeler's working queue: optimistic submission state reconciled with
// the server response. The daily quota indicator is advisory only.

import type { AnnotationResponse, WorklistItem } from "./types.js";

export type ItemState = "pending" | "submitting" | "submitted" | "failed";

export interface QueueEntry {
  item: WorklistItem;
  state: ItemState;
  agreement: number;
  error?: string;
}

export const DAILY_QUOTA = 40;

export class LabelingQueue {
  private readonly entries: Map<string, QueueEntry> = new Map();
  private readonly order: string[] = [];
  readonly dailyQuota: number;

  constructor(items: WorklistItem[], dailyQuota = DAILY_QUOTA) {
    this.dailyQuota = dailyQuota;
    for (const item of [...items].sort((a, b) => a.rank - b.rank)) {
      if (!this.entries.has(item.audio_id)) {
        this.entries.set(item.audio_id, {
          item,
          state: "pending",
          agreement: item.agreement,
        });
        this.order.push(item.audio_id);
      }
    }
  }

  get(audioId: string): QueueEntry | undefined {
    return this.entries.get(audioId);
  }

  all(): QueueEntry[] {
    return this.order.map((id) => this.entries.get(id)!);
  }

  /** The item the labeler should work next (first pending or failed). */
  current(): QueueEntry | undefined {
    return this.all().find((e) => e.state === "pending" || e.state === "failed");
  }

  private expect(audioId: string): QueueEntry {
    const entry = this.entries.get(audioId);
    if (!entry) {
      throw new Error(`audio ${audioId} is not in this queue`);
    }
    return entry;
  }

  /** Optimistic transition: the UI moves on while the request is in flight. */
  beginSubmit(audioId: string): void {
    const entry = this.expect(audioId);
    if (entry.state === "submitted") {
      throw new Error(`audio ${audioId} was already submitted`);
    }
    entry.state = "submitting";
    entry.error = undefined;
  }

  /** Reconcile with the server's acknowledgment. */
  resolveSubmit(audioId: string, response: AnnotationResponse): void {
    const entry = this.expect(audioId);
    entry.state = "submitted";
    entry.agreement = response.agreement;
  }

  /** Submission bounced (409/422): back to the queue with the reason. */
  failSubmit(audioId: string, message: string): void {
    const entry = this.expect(audioId);
    entry.state = "failed";
    entry.error = message;
  }

  pendingCount(): number {
    return this.all().filter((e) => e.state === "pending" || e.state === "failed").length;
  }

  submittedCount(): number {
    return this.all().filter((e) => e.state === "submitted").length;
  }

  isDone(): boolean {
    return this.pendingCount() === 0 && !this.all().some((e) => e.state === "submitting");
  }

  /** Advisory progress toward the daily target, e.g. "12 / 40 today". */
  quotaIndicator(): string {
    return `${Math.min(this.submittedCount(), this.dailyQuota)} / ${this.dailyQuota} today`;
  }

  quotaMet(): boolean {
    return this.submittedCount() >= this.dailyQuota;
  }
}
