// Conflict resolution screen: each OPEN conflict with every user's position
// and the message context; picking a label posts the resolution and removes
// the entry without a reload.

import { ApiError, type FeedloopClient } from "./api.js";
import type { Conflict, Label } from "./types.js";
import { escapeHtml } from "./render.js";

export class ConflictsController {
  conflicts: Conflict[] = [];
  lastError: string | null = null;

  constructor(private readonly client: FeedloopClient) {}

  async load(): Promise<void> {
    this.conflicts = await this.client.conflicts();
  }

  async resolve(conflictId: number, label: Label): Promise<boolean> {
    const index = this.conflicts.findIndex((c) => c.conflict_id === conflictId);
    const removed = index >= 0 ? this.conflicts.splice(index, 1) : [];
    this.lastError = null;
    try {
      await this.client.resolveConflict(conflictId, label, this.client.userId);
      return true;
    } catch (error) {
      if (index >= 0) this.conflicts.splice(index, 0, ...removed); // rollback
      this.lastError =
        error instanceof ApiError ? error.errorName : error instanceof Error ? error.message : String(error);
      return false;
    }
  }

  render(): string {
    if (this.conflicts.length === 0) {
      return `<div class="empty-state">No open conflicts. Disagreements between analysts land here.</div>`;
    }
    return this.conflicts
      .map((conflict) => {
        const positions = Object.entries(conflict.positions)
          .map(([user, label]) => `<li><code>${escapeHtml(user)}</code> says ${label}</li>`)
          .join("");
        return `
        <article class="conflict" data-conflict="${conflict.conflict_id}">
          <p class="text">${escapeHtml(conflict.text)}</p>
          <ul class="positions">${positions}</ul>
          <footer>
            <button data-action="resolve-ct">Resolve as CT</button>
            <button data-action="resolve-not-ct">Resolve as NOT_CT</button>
          </footer>
        </article>`;
      })
      .join("\n");
  }
}
