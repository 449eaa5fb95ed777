// Implicit-signal tracking: viewport visibility of at least one second emits
// IMPRESSION, scrolling past emits SCROLL_PAST, opening emits CLICK, and the
// open duration emits DWELL. Events are batched into one request per flush.
// When the deployment privacy switch is off the tracker records nothing and
// never calls the network.

import type { FeedloopClient } from "./api.js";
import type { FeedItem, ImplicitEvent, ImplicitKind } from "./types.js";

export const IMPRESSION_THRESHOLD_MS = 1000;

interface Open {
  startedMs: number;
}

export class ImplicitTracker {
  private queue: ImplicitEvent[] = [];
  private visibleSince = new Map<string, number>();
  private impressed = new Set<string>();
  private open = new Map<string, Open>();
  flushedBatches = 0;

  constructor(
    private readonly client: FeedloopClient,
    public enabled: boolean,
    private readonly now: () => number = () => Date.now(),
  ) {}

  private key(item: FeedItem): string {
    return `${item.message.channel_id}:${item.message.message_id}`;
  }

  private push(item: FeedItem, kind: ImplicitKind, dwellSeconds?: number): void {
    if (!this.enabled) return;
    this.queue.push({
      user_id: this.client.userId,
      channel_id: item.message.channel_id,
      message_id: item.message.message_id,
      kind,
      dwell_seconds: dwellSeconds,
      displayed_version: item.classification?.version_id,
    });
  }

  pending(): number {
    return this.queue.length;
  }

  onVisible(item: FeedItem): void {
    if (!this.enabled) return;
    const key = this.key(item);
    if (!this.visibleSince.has(key)) this.visibleSince.set(key, this.now());
  }

  onHidden(item: FeedItem): void {
    if (!this.enabled) return;
    const key = this.key(item);
    const since = this.visibleSince.get(key);
    this.visibleSince.delete(key);
    if (since === undefined || this.impressed.has(key)) return;
    if (this.now() - since >= IMPRESSION_THRESHOLD_MS) {
      this.impressed.add(key);
      this.push(item, "IMPRESSION");
    }
  }

  onScrollPast(item: FeedItem): void {
    this.push(item, "SCROLL_PAST");
  }

  onOpen(item: FeedItem): void {
    if (!this.enabled) return;
    this.push(item, "CLICK");
    this.open.set(this.key(item), { startedMs: this.now() });
  }

  onClose(item: FeedItem): void {
    if (!this.enabled) return;
    const opened = this.open.get(this.key(item));
    if (!opened) return;
    this.open.delete(this.key(item));
    const seconds = (this.now() - opened.startedMs) / 1000;
    this.push(item, "DWELL", seconds);
  }

  /** Send everything queued as a single batched request. */
  async flush(): Promise<number> {
    if (!this.enabled || this.queue.length === 0) return 0;
    const batch = this.queue;
    this.queue = [];
    try {
      const result = await this.client.sendImplicitBatch(batch);
      this.flushedBatches += 1;
      return result.recorded;
    } catch (error) {
      this.queue = batch.concat(this.queue); // retry on the next flush
      throw error;
    }
  }
}
