// render.ts - paint the current view into the page.
//
// Rendering is a one-way projection of SessionClient state; no DOM state
// feeds back into the view model. Everything is rebuilt per change, which
// is plenty fast at session scale and keeps the data flow one-directional.

import type { SessionClient } from "./client.js";
import type { SessionView, StageNodeView } from "./viewModel.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function stageCell(node: StageNodeView, active: string | null): string {
  const cls = node.stage === active ? "stage active" : `stage ${node.status}`;
  const pct = Math.round(node.completionLevel * 100);
  return `<div class="${cls}"><span class="stage-id">${esc(node.stage)}</span><span class="stage-pct">${pct}%</span></div>`;
}

function adviceCards(view: SessionView): string {
  const cards: string[] = [];
  if (view.advice.phase) {
    cards.push(
      `<div class="advice phase"><em>${esc(view.advice.phase.category)}</em><p>${esc(view.advice.phase.text)}</p></div>`,
    );
  }
  if (view.advice.realtime) {
    cards.push(
      `<div class="advice realtime"><em>${esc(view.advice.realtime.category)}</em><p>${esc(view.advice.realtime.text)}</p></div>`,
    );
  }
  if (view.advice.history.length > 0) {
    const items = view.advice.history
      .map((c) => `<li><em>${esc(c.kind)}</em> ${esc(c.text)}</li>`)
      .join("");
    cards.push(
      `<details class="advice-history"><summary>${view.advice.history.length} earlier</summary><ul>${items}</ul></details>`,
    );
  }
  return cards.join("") || "<p class=\"muted\">No advice yet.</p>";
}

function transcriptPane(client: SessionClient): string {
  const rows = client
    .transcript()
    .map(
      (t) =>
        `<div class="turn ${esc(t.speaker)}"><b>${esc(t.speaker)}</b> ${esc(t.text)}</div>`,
    )
    .join("");
  return rows || "<p class=\"muted\">Say something to begin.</p>";
}

function imagePane(view: SessionView): string {
  if (!view.image) return "";
  if (view.image.status !== "ready" || !view.image.dataB64) {
    return `<p class="muted">Image ${esc(view.image.id)}: ${esc(view.image.reason ?? view.image.status)}</p>`;
  }
  return `<img alt="scene illustration" src="data:image/png;base64,${view.image.dataB64}" onerror="this.outerHTML='<p class=&quot;muted&quot;>illustration ${esc(view.image.id)} ready</p>'">`;
}

function rewardOverlay(view: SessionView): string {
  const reward = view.report?.reward;
  if (!reward) return "";
  const count = typeof reward["count"] === "number" ? (reward["count"] as number) : 0;
  const caption = typeof reward["caption"] === "string" ? (reward["caption"] as string) : "";
  return `<div class="reward">${"⭐".repeat(Math.max(1, count))}<p>${esc(caption)}</p></div>`;
}

function reportPane(view: SessionView): string {
  if (!view.report) return "";
  const report = view.report.report;
  const perStage = (report["per_stage"] ?? {}) as Record<string, Record<string, unknown>>;
  const rows = Object.entries(perStage)
    .map(
      ([stage, r]) =>
        `<tr><td>${esc(stage)}</td><td>${esc(String(r["score"] ?? ""))}</td><td>${esc(String(r["review"] ?? ""))}</td></tr>`,
    )
    .join("");
  const suggestions = ((report["suggestions"] ?? []) as unknown[])
    .map((s) => `<li>${esc(String(s))}</li>`)
    .join("");
  return `
    <h2>Session report</h2>
    <table><tr><th>Stage</th><th>Score</th><th>Review</th></tr>${rows}</table>
    <ul>${suggestions}</ul>`;
}

function interviewPane(view: SessionView): string {
  if (view.interview.done) {
    return "<p>Interview complete. Thank you!</p>";
  }
  if (!view.interview.question) return "";
  const q = view.interview.question;
  const probe = q.followupOf ? ` <span class="muted">(digging into ${esc(q.followupOf)})</span>` : "";
  return `<p class="question"><b>${esc(q.id)}</b> ${esc(q.text)}${probe}</p>`;
}

function statusBanner(client: SessionClient): string {
  if (client.status === "reconnecting") {
    return "<div class=\"banner warn\">Connection lost, reconnecting…</div>";
  }
  const lastError = client.view.errors[client.view.errors.length - 1];
  if (lastError) {
    return `<div class="banner error">${esc(lastError.code)}: ${esc(lastError.message)}</div>`;
  }
  return "";
}

/** Three columns per dimension, matching the profile comparison document. */
export function renderProfile(profile: Record<string, unknown>): string {
  const entries = ((profile["entries"] ?? []) as Record<string, unknown>[]).reduce(
    (byId: Record<string, Record<string, unknown>>, e) => {
      byId[String(e["id"])] = e;
      return byId;
    },
    {},
  );
  const comparison = (profile["comparison"] ?? {}) as Record<string, Record<string, unknown>>;
  const statement = (id: unknown): string => {
    const entry = entries[String(id)];
    return entry ? String(entry["statement"] ?? id) : String(id);
  };
  const sections = Object.entries(comparison).map(([dimension, comp]) => {
    const aligned = ((comp["aligned"] ?? []) as unknown[][]) // groups of entry ids
      .map((group) => `<li>${group.map(statement).map(esc).join(" ↔ ")}</li>`)
      .join("");
    const solo = (key: string): string =>
      ((comp[key] ?? []) as unknown[]).map((id) => `<li>${esc(statement(id))}</li>`).join("");
    return `
      <h3>${esc(dimension)}</h3>
      <div class="columns">
        <div><h4>Aligned</h4><ul>${aligned}</ul></div>
        <div><h4>Parent only</h4><ul>${solo("parent_only")}</ul></div>
        <div><h4>AI only</h4><ul>${solo("ai_only")}</ul></div>
      </div>`;
  });
  return sections.join("") || "<p class=\"muted\">No profile entries yet.</p>";
}

export function render(root: HTMLElement, client: SessionClient): void {
  const view = client.view;
  const strip = view.strip
    ? view.strip.nodes.map((n) => stageCell(n, view.strip!.active)).join("")
    : "<p class=\"muted\">Not started.</p>";
  const finished = view.strip?.finishedAt !== null && view.strip !== null;
  root.innerHTML = `
    ${statusBanner(client)}
    <section class="strip">${strip}</section>
    <section class="advice-panel">${adviceCards(view)}</section>
    <section class="transcript">${transcriptPane(client)}</section>
    <section class="media">${imagePane(view)}${rewardOverlay(view)}</section>
    <section class="interview">${interviewPane(view)}</section>
    <section class="report">${reportPane(view)}</section>
    <p class="muted">${finished ? "Session finished." : ""} last seq ${view.lastSeq}, profile v${view.profile?.version ?? 0}</p>
  `;
}
