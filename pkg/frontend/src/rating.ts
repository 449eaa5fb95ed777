// Guided rating task: a seeded representative sample that must be rated in
// full (no skipping) so the gold set receives feedback without negativity
// bias. Progress persists locally and resumes after abandonment.

import type { FeedloopClient } from "./api.js";
import type { ExplicitKind, Label, RatingItem } from "./types.js";
import { confidencePercent, escapeHtml } from "./render.js";

export interface ProgressStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStorage implements ProgressStorage {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

interface SavedProgress {
  seed: number;
  n: number;
  cursor: number;
}

const STORAGE_KEY = "feedloop.rating-task";

export class RatingTaskController {
  items: RatingItem[] = [];
  cursor = 0;
  seed = 0;
  lastError: string | null = null;

  constructor(
    private readonly client: FeedloopClient,
    private readonly storage: ProgressStorage = new MemoryStorage(),
  ) {}

  get total(): number {
    return this.items.length;
  }

  get complete(): boolean {
    return this.cursor >= this.items.length;
  }

  get current(): RatingItem | null {
    return this.complete ? null : this.items[this.cursor];
  }

  async start(n: number, seed: number): Promise<void> {
    this.items = await this.client.ratingTask(n, seed);
    this.seed = seed;
    this.cursor = 0;
    this.save();
  }

  /** Resume a previously abandoned task, if one was persisted. */
  async resume(): Promise<boolean> {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return false;
    const saved = JSON.parse(raw) as SavedProgress;
    this.items = await this.client.ratingTask(saved.n, saved.seed); // seeded: same sample
    this.seed = saved.seed;
    this.cursor = Math.min(saved.cursor, this.items.length);
    return true;
  }

  private save(): void {
    if (this.complete) {
      this.storage.removeItem(STORAGE_KEY);
      return;
    }
    this.storage.setItem(
      STORAGE_KEY,
      JSON.stringify({ seed: this.seed, n: this.items.length, cursor: this.cursor }),
    );
  }

  /** Rate the current item; advancing requires a successful explicit event. */
  async rate(kind: ExplicitKind, label?: Label): Promise<boolean> {
    const item = this.current;
    if (!item) return false;
    if (!item.classification && kind !== "RELABEL") {
      this.lastError = "unclassified posts must be relabeled";
      return false;
    }
    this.lastError = null;
    try {
      await this.client.sendFeedback({
        user_id: this.client.userId,
        channel_id: item.message.channel_id,
        message_id: item.message.message_id,
        kind,
        label: kind === "RELABEL" ? label : undefined,
        displayed_version: item.classification?.version_id,
      });
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
      return false;
    }
    this.cursor += 1;
    this.save();
    return true;
  }

  render(): string {
    if (this.items.length === 0) {
      return `<div class="empty-state">Start a rating task to provide representative feedback.</div>`;
    }
    if (this.complete) {
      return `<div class="task-complete">Task complete: ${this.total}/${this.total} posts rated. Thank you.</div>`;
    }
    const item = this.current as RatingItem;
    const c = item.classification;
    const shown = c
      ? `<span class="badge badge-${c.label.toLowerCase()}">${c.label}</span>
         <span class="confidence">${confidencePercent(c.confidence)}</span>`
      : `<span class="badge badge-none">unclassified</span>`;
    return `
      <div class="progress">Post ${this.cursor + 1} of ${this.total} (no skipping)</div>
      <article class="rating-item">
        <header>${shown}</header>
        <p class="text">${escapeHtml(item.message.text)}</p>
        <footer>
          <button data-action="agree">Agree</button>
          <button data-action="disagree">Disagree</button>
          <button data-action="relabel-ct">It is CT</button>
          <button data-action="relabel-not-ct">It is NOT_CT</button>
        </footer>
      </article>`;
  }
}
