import { describe, expect, it } from "vitest";

import type { PendingQuery, ResultReport } from "../src/api.js";
import { renderBanner, renderProgress, renderQuery, renderResult } from "../src/view.js";

const QUERY: PendingQuery = {
  query_id: 3,
  a: { unit_id: 4, session: 0, waveform: [[0, 1], [1, 0]] },
  b: { unit_id: 9, session: 2, waveform: [[2, 3], [3, 2]] },
  progress: { answered: 2, inferred: 1, blocks_found: 1, units_remaining: 7 },
};

describe("renderQuery", () => {
  it("shows both units with session badges and one polyline per channel", () => {
    const html = renderQuery(QUERY);
    expect(html).toContain("unit 4");
    expect(html).toContain("unit 9");
    expect(html).toContain("session 0");
    expect(html).toContain("session 2");
    expect(html.match(/<polyline/g)).toHaveLength(4);
  });

  it("scales both units against the shared pair range", () => {
    const html = renderQuery(QUERY);
    // unit a's flat-ish traces must not fill the full box height: the pair
    // maximum (3, from unit b) owns the top edge
    const points = [...html.matchAll(/points="([^"]*)"/g)].map((m) => m[1]);
    const ys = points
      .flatMap((p) => p!.split(" "))
      .map((pt) => parseFloat(pt.split(",")[1]!));
    expect(Math.min(...ys)).toBe(0); // someone touches the top
    const firstUnitYs = points
      .slice(0, 2)
      .flatMap((p) => p!.split(" "))
      .map((pt) => parseFloat(pt.split(",")[1]!));
    expect(Math.min(...firstUnitYs)).toBeGreaterThan(0); // but not unit a
  });
});

describe("renderProgress", () => {
  it("prints all four counters and the query id", () => {
    const html = renderProgress(QUERY.progress, 3);
    for (const piece of ["answered <b>2</b>", "inferred <b>1</b>", "blocks found <b>1</b>", "units remaining <b>7</b>", "query #3"]) {
      expect(html).toContain(piece);
    }
  });
});

describe("renderResult", () => {
  const result: ResultReport = {
    partition: [[0, 2, 5], [1], [3, 4]],
    counters: { oracle_consultations: 7, inferred_answers: 2, blocks_found: 3 },
    per_tree: [],
  };

  it("renders one card per cluster whose members sum to n", () => {
    const sessions = new Map([[0, 0], [1, 0], [2, 1], [3, 0], [4, 2], [5, 1]]);
    const html = renderResult(result, sessions, "/api/v1/sessions/x/export");
    const cards = html.match(/class="cluster-card"/g) ?? [];
    expect(cards).toHaveLength(3);
    const members = [...html.matchAll(/cluster-members">([^<]*)</g)]
      .flatMap((m) => m[1]!.split(",").map((s) => parseInt(s.trim(), 10)));
    expect(members.sort((a, b) => a - b)).toEqual([0, 1, 2, 3, 4, 5]);
    expect(html).toContain("sessions 0, 1");
  });

  it("links the export endpoint", () => {
    const html = renderResult(result, new Map(), "/api/v1/sessions/x/export");
    expect(html).toContain('href="/api/v1/sessions/x/export"');
  });
});

describe("renderBanner", () => {
  it("escapes markup in messages", () => {
    expect(renderBanner('<img onerror="x">')).not.toContain("<img");
    expect(renderBanner(null)).toBe("");
  });
});
