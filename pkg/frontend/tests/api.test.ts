import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(body === null ? null : JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("treats 204 from the query endpoint as completion", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => new Response(null, { status: 204 })));
    const api = new ApiClient("");
    expect(await api.getQuery("abc")).toEqual({ kind: "complete" });
    expect(vi.mocked(fetch).mock.calls[0]![0]).toBe("/api/v1/sessions/abc/query");
  });

  it("returns pending queries verbatim", async () => {
    const payload = {
      query_id: 4,
      a: { unit_id: 1, session: 0, waveform: [[0]] },
      b: { unit_id: 2, session: 1, waveform: [[1]] },
      progress: { answered: 3, inferred: 0, blocks_found: 1, units_remaining: 5 },
    };
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(200, payload)));
    const api = new ApiClient("");
    expect(await api.getQuery("abc")).toEqual({ kind: "pending", query: payload });
  });

  it("surfaces submit conflicts with the embedded pending query", async () => {
    const pending = { query_id: 7 };
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse(409, { pending, status: "awaiting_answer" })),
    );
    const api = new ApiClient("");
    const outcome = await api.submitAnswer("abc", 6, "same");
    expect(outcome).toEqual({ kind: "conflict", pending, status: "awaiting_answer" });
  });

  it("posts answers with the exact wire format", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse(200, { status: "awaiting_answer", progress: {} })),
    );
    const api = new ApiClient("http://host:9");
    await api.submitAnswer("abc", 3, "different");
    const [url, init] = vi.mocked(fetch).mock.calls[0]!;
    expect(url).toBe("http://host:9/api/v1/sessions/abc/answers");
    expect(JSON.parse((init as RequestInit).body as string)).toEqual({
      query_id: 3,
      answer: "different",
    });
  });

  it("raises on server errors with the service's detail", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(404, { detail: "unknown session" })));
    const api = new ApiClient("");
    await expect(api.getState("missing")).rejects.toThrow("unknown session");
  });

  it("builds the export download url", () => {
    expect(new ApiClient("").exportUrl("abc")).toBe("/api/v1/sessions/abc/export");
  });
});
