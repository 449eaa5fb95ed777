// Lifecycle and drift dashboard: drift score history with threshold markers,
// feedback volume, per-version evaluation metrics, rollout split, and the
// prompt governance log. Renders empty states, never errors, when no data
// exists yet.

import type { FeedloopClient } from "./api.js";
import type { Metrics, VersionSummary } from "./types.js";
import { escapeHtml, formatTimestamp } from "./render.js";

export function driftSparkline(
  scores: { jsd: number; triggered: boolean }[],
  width = 320,
  height = 60,
): string {
  if (scores.length === 0) return "";
  const step = scores.length > 1 ? width / (scores.length - 1) : 0;
  const points = scores
    .map((s, i) => `${(i * step).toFixed(1)},${(height - s.jsd * height).toFixed(1)}`)
    .join(" ");
  const markers = scores
    .map((s, i) =>
      s.triggered
        ? `<circle class="drift-triggered" cx="${(i * step).toFixed(1)}" cy="${(height - s.jsd * height).toFixed(1)}" r="3"/>`
        : "",
    )
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" class="sparkline" role="img">
    <polyline fill="none" points="${points}"/>${markers}</svg>`;
}

export class DashboardController {
  metrics: Metrics | null = null;

  constructor(private readonly client: FeedloopClient) {}

  async load(): Promise<void> {
    this.metrics = await this.client.metrics();
  }

  private versionRow(version: VersionSummary, pendingHotfix: string[]): string {
    const monitoring =
      version.review_after !== null && pendingHotfix.includes(version.version_id)
        ? `<span class="hotfix-warning">HOTFIX: evaluation pending</span>`
        : version.review_after !== null
          ? `<span class="hotfix-monitored">monitored</span>`
          : "";
    const f1 = version.validation_f1 === null ? "-" : version.validation_f1.toFixed(3);
    return `<tr data-version="${escapeHtml(version.version_id)}">
      <td>${escapeHtml(version.version_id)}</td>
      <td>${version.pathway}</td>
      <td>${escapeHtml(version.status)}</td>
      <td>${f1}</td>
      <td>${monitoring}</td>
    </tr>`;
  }

  render(): string {
    const m = this.metrics;
    if (!m) return `<div class="empty-state">Loading metrics…</div>`;

    const drift =
      m.drift.length === 0
        ? `<div class="empty-state">No drift reports yet.</div>`
        : `${driftSparkline(m.drift)}
           <div class="drift-latest">latest JSD ${m.drift[m.drift.length - 1].jsd.toFixed(3)}
           / OOV ${m.drift[m.drift.length - 1].oov_rate.toFixed(3)}
           ${m.drift[m.drift.length - 1].triggered ? '<span class="drift-triggered-label">above threshold</span>' : ""}</div>`;

    const feedback =
      m.feedback.total === 0
        ? `<div class="empty-state">No feedback recorded yet.</div>`
        : `<ul class="feedback-volume">${Object.entries(m.feedback.by_kind)
            .sort()
            .map(([kind, count]) => `<li>${escapeHtml(kind)}: ${count}</li>`)
            .join("")}</ul>`;

    const versions =
      m.versions.length === 0
        ? `<div class="empty-state">No model or prompt versions yet.</div>`
        : `<table class="versions"><thead>
            <tr><th>version</th><th>pathway</th><th>status</th><th>val F1</th><th></th></tr>
           </thead><tbody>
           ${m.versions.map((v) => this.versionRow(v, m.pending_hotfix_evaluations)).join("\n")}
           </tbody></table>`;

    const rollout = m.rollout
      ? `<div class="rollout">A/B: <code>${escapeHtml(m.rollout.variant_a)}</code> vs
         <code>${escapeHtml(m.rollout.variant_b)}</code>,
         ${Math.round(m.rollout.fraction_b * 100)}% to B by ${m.rollout.key_basis.toLowerCase()}</div>`
      : `<div class="empty-state">No active rollout.</div>`;

    const governance = m.versions
      .flatMap((v) =>
        v.governance_log.map(
          (entry) =>
            `<li><code>${escapeHtml(v.version_id)}</code> ${escapeHtml(entry.action)}
             by ${escapeHtml(entry.actor)} at ${formatTimestamp(entry.at)}:
             ${escapeHtml(entry.rationale)}</li>`,
        ),
      )
      .join("");

    return `
      <section class="cards">
        <div class="card"><h3>Messages</h3><div class="stat">${m.messages}</div></div>
        <div class="card"><h3>Gold examples</h3><div class="stat">${m.gold.live}</div></div>
        <div class="card"><h3>Open conflicts</h3><div class="stat">${m.conflicts.open}</div></div>
        <div class="card"><h3>Review queue</h3><div class="stat">${m.review_queue}</div></div>
      </section>
      <section><h3>Concept drift</h3>${drift}</section>
      <section><h3>Feedback volume</h3>${feedback}</section>
      <section><h3>Versions</h3>${versions}</section>
      <section><h3>Rollout</h3>${rollout}</section>
      <section><h3>Governance log</h3>
        ${governance ? `<ul class="governance">${governance}</ul>` : `<div class="empty-state">Empty.</div>`}
      </section>`;
  }
}
