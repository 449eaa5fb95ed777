// Infinite-scroll feed: messages with label badge, confidence, pathway and
// version tag, review marker, and explicit feedback controls. Feedback is
// optimistic: the UI updates immediately and rolls back with a toast when the
// API rejects. Every feedback request carries the classification snapshot
// that was on screen when the user acted.

import type { FeedloopClient } from "./api.js";
import type { ImplicitTracker } from "./signals.js";
import type { ExplicitKind, FeedItem, Label, MyFeedback } from "./types.js";
import { confidencePercent, escapeHtml, formatTimestamp } from "./render.js";

export interface FeedFilters {
  query?: string;
  channel?: string;
}

export class FeedController {
  items: FeedItem[] = [];
  filters: FeedFilters = {};
  exhausted = false;
  lastError: string | null = null;
  private page = 0;
  private readonly pageSize: number;

  constructor(
    private readonly client: FeedloopClient,
    public readonly tracker: ImplicitTracker,
    opts: { pageSize?: number } = {},
  ) {
    this.pageSize = opts.pageSize ?? 25;
  }

  async reload(filters: FeedFilters = this.filters): Promise<void> {
    this.filters = filters;
    this.items = [];
    this.page = 0;
    this.exhausted = false;
    await this.loadNext();
  }

  async loadNext(): Promise<number> {
    if (this.exhausted) return 0;
    const page = await this.client.feed({
      query: this.filters.query,
      channel: this.filters.channel,
      page: this.page,
      page_size: this.pageSize,
    });
    this.page += 1;
    this.items.push(...page.items);
    if (page.items.length < this.pageSize) this.exhausted = true;
    return page.items.length;
  }

  itemAt(index: number): FeedItem {
    const item = this.items[index];
    if (!item) throw new Error(`no feed item at index ${index}`);
    return item;
  }

  /** Post explicit feedback, optimistically updating the "mine" marker. */
  async sendFeedback(item: FeedItem, kind: ExplicitKind, label?: Label): Promise<boolean> {
    const previous: MyFeedback | null = item.mine ?? null;
    const displayed = item.classification;
    if (!displayed && kind !== "RELABEL") {
      this.lastError = `${kind} needs a displayed classification`;
      return false;
    }
    const optimisticLabel: Label =
      kind === "RELABEL"
        ? (label as Label)
        : kind === "AGREE"
          ? (displayed as NonNullable<typeof displayed>).label
          : (displayed as NonNullable<typeof displayed>).label === "CT"
            ? "NOT_CT"
            : "CT";
    item.mine = { kind, label: optimisticLabel };
    this.lastError = null;
    try {
      await this.client.sendFeedback({
        user_id: this.client.userId,
        channel_id: item.message.channel_id,
        message_id: item.message.message_id,
        kind,
        label: kind === "RELABEL" ? label : undefined,
        displayed_version: displayed?.version_id,
      });
      return true;
    } catch (error) {
      item.mine = previous; // rollback
      this.lastError = error instanceof Error ? error.message : String(error);
      return false;
    }
  }

  renderItem(item: FeedItem): string {
    const msg = item.message;
    const c = item.classification;
    const badge = c
      ? `<span class="badge badge-${c.label.toLowerCase()}">${c.label}</span>
         <span class="confidence">${confidencePercent(c.confidence)}</span>
         <span class="version-tag">${escapeHtml(c.pathway)}/${escapeHtml(c.version_id)}</span>`
      : `<span class="badge badge-none">unclassified</span>`;
    const review = item.in_review_queue ? `<span class="review-marker">needs review</span>` : "";
    const mine = item.mine
      ? `<span class="mine">you: ${item.mine.kind} (${item.mine.label})</span>`
      : "";
    return `
      <article class="feed-item" data-channel="${escapeHtml(msg.channel_id)}" data-id="${msg.message_id}">
        <header>${badge}${review}
          <time>${formatTimestamp(msg.posted_at)}</time>
          <span class="channel">${escapeHtml(msg.channel_id)}</span>
        </header>
        <p class="text">${escapeHtml(msg.text)}</p>
        <footer>
          <button data-action="agree">Agree</button>
          <button data-action="disagree">Disagree</button>
          <button data-action="relabel-ct">Relabel CT</button>
          <button data-action="relabel-not-ct">Relabel NOT_CT</button>
          ${mine}
        </footer>
      </article>`;
  }

  render(): string {
    if (this.items.length === 0) {
      return `<div class="empty-state">No messages match this search.</div>`;
    }
    return this.items.map((item) => this.renderItem(item)).join("\n");
  }
}
