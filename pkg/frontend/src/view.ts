/**
 * DOM rendering: the query screen (two channel grids with overlaid traces on
 * a shared scale), the progress strip, and the completion dashboard with one
 * card per recovered cluster.
 */

import type { PendingQuery, Progress, ResultReport, WaveformUnit } from "./api.js";
import type { UiState } from "./controller.js";
import { channelGrid, polylinePoints, sharedScale, sessionsCovered, Scale } from "./waveform.js";

const CELL_W = 72;
const CELL_H = 40;

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function unitPanel(unit: WaveformUnit, scale: Scale, label: string, css: string): string {
  const rows = channelGrid(unit.waveform, 8);
  const grid = rows
    .map(
      (row) =>
        `<div class="channel-row">` +
        row
          .map(
            (channel) =>
              `<svg class="channel" viewBox="0 0 ${CELL_W} ${CELL_H}" ` +
              `preserveAspectRatio="none"><polyline points="` +
              polylinePoints(channel, scale, CELL_W, CELL_H) +
              `" fill="none" /></svg>`,
          )
          .join("") +
        `</div>`,
    )
    .join("");
  return `
    <div class="unit-panel ${css}">
      <div class="unit-head">
        <span class="unit-label">${esc(label)}</span>
        <span class="unit-id">unit ${unit.unit_id}</span>
        <span class="session-badge">session ${unit.session}</span>
      </div>
      <div class="channel-grid">${grid}</div>
    </div>`;
}

export function renderQuery(query: PendingQuery): string {
  const scale = sharedScale(query.a.waveform, query.b.waveform);
  return `
    <div class="pair">
      ${unitPanel(query.a, scale, "A", "unit-a")}
      ${unitPanel(query.b, scale, "B", "unit-b")}
    </div>
    <div class="controls">
      <button id="btn-same" class="btn same">Same <kbd>S</kbd></button>
      <button id="btn-diff" class="btn diff">Different <kbd>D</kbd></button>
      <button id="btn-undo" class="btn undo">Undo <kbd>U</kbd></button>
    </div>
    <p class="question">Do these two units come from the same source?</p>`;
}

export function renderProgress(progress: Progress | null, queryId: number | null): string {
  if (!progress) {
    return "";
  }
  const parts = [
    `answered <b>${progress.answered}</b>`,
    `inferred <b>${progress.inferred}</b>`,
    `blocks found <b>${progress.blocks_found}</b>`,
    `units remaining <b>${progress.units_remaining}</b>`,
  ];
  const qid = queryId !== null ? `<span class="qid">query #${queryId}</span>` : "";
  return `<div class="progress">${parts.join(" · ")} ${qid}</div>`;
}

export function renderResult(
  result: ResultReport,
  sessionOf: Map<number, number>,
  exportUrl: string,
): string {
  const cards = result.partition
    .map((members, i) => {
      const sessions = sessionsCovered(members, sessionOf);
      const badge = sessions.length
        ? `<span class="sessions">sessions ${sessions.join(", ")}</span>`
        : "";
      return `
        <div class="cluster-card">
          <div class="cluster-title">cluster ${i}</div>
          <div class="cluster-size">${members.length} unit${members.length === 1 ? "" : "s"}</div>
          ${badge}
          <div class="cluster-members">${members.join(", ")}</div>
        </div>`;
    })
    .join("");
  const c = result.counters;
  return `
    <div class="done-head">
      <h2>Curation complete</h2>
      <p>${result.partition.length} clusters ·
         ${c.oracle_consultations} answers ·
         ${c.inferred_answers} inferred</p>
      <a class="btn export" href="${exportUrl}" download="query_log.jsonl">Download query log</a>
    </div>
    <div class="cluster-cards">${cards}</div>`;
}

export function renderBanner(banner: string | null): string {
  return banner ? `<div class="banner">${esc(banner)}</div>` : "";
}

export function renderState(
  state: UiState,
  sessionOf: Map<number, number>,
  exportUrl: string,
): string {
  const progress = renderProgress(state.progress, state.query?.query_id ?? null);
  const banner = renderBanner(state.banner);
  switch (state.phase) {
    case "loading":
      return `${banner}<p class="status">Loading session ${esc(state.sessionId)}…</p>`;
    case "awaiting":
    case "submitting":
      if (!state.query) {
        return `${banner}<p class="status">Waiting for the engine…</p>`;
      }
      return (
        banner +
        progress +
        renderQuery(state.query) +
        (state.phase === "submitting" ? `<p class="status">Submitting…</p>` : "")
      );
    case "complete":
      return banner + progress + (state.result ? renderResult(state.result, sessionOf, exportUrl) : "");
    case "aborted":
      return `${banner}${progress}<p class="status">This session was aborted. The log is retained.</p>`;
    case "error":
      return `${banner}<p class="status">Something went wrong. Reload to retry.</p>`;
  }
}
