/**
 * Session flow state machine. Holds no authoritative state: every transition
 * is driven by a server response, and a page reload rebuilds everything from
 * the state/query endpoints. Submissions are guarded twice - one in-flight
 * request at a time, and only for the query_id currently on screen - so a
 * user action can never double-apply or answer an unseen pair.
 */

import type {
  Answer,
  PendingQuery,
  Progress,
  ResultReport,
  SessionState,
} from "./api.js";

export type Phase =
  | "loading"
  | "awaiting"
  | "submitting"
  | "complete"
  | "aborted"
  | "error";

export interface UiState {
  phase: Phase;
  sessionId: string;
  query: PendingQuery | null;
  progress: Progress | null;
  result: ResultReport | null;
  banner: string | null;
  answeredHere: { queryId: number; answer: Answer }[];
}

export interface ApiLike {
  getState(sessionId: string): Promise<SessionState>;
  getQuery(
    sessionId: string,
  ): Promise<
    | { kind: "pending"; query: PendingQuery }
    | { kind: "complete" }
    | { kind: "aborted" }
  >;
  submitAnswer(
    sessionId: string,
    queryId: number,
    answer: Answer,
  ): Promise<
    | { kind: "accepted"; status: string; progress: Progress }
    | { kind: "conflict"; pending: PendingQuery | null; status: string }
    | { kind: "rejected"; detail: string }
  >;
  undo(sessionId: string, k?: number): Promise<{ pending: PendingQuery | null; progress: Progress }>;
  getResult(sessionId: string): Promise<ResultReport>;
}

export class SessionController {
  readonly state: UiState;
  private inFlight = false;

  constructor(
    private readonly api: ApiLike,
    sessionId: string,
    private readonly onChange: (state: UiState) => void = () => {},
  ) {
    this.state = {
      phase: "loading",
      sessionId,
      query: null,
      progress: null,
      result: null,
      banner: null,
      answeredHere: [],
    };
  }

  private emit(): void {
    this.onChange(this.state);
  }

  /** Rebuild the view from the server (initial load and page refresh). */
  async refresh(): Promise<void> {
    this.state.phase = "loading";
    this.state.banner = null;
    this.emit();
    try {
      const snapshot = await this.api.getState(this.state.sessionId);
      this.state.progress = snapshot.progress;
      if (snapshot.status === "aborted") {
        this.state.phase = "aborted";
        this.emit();
        return;
      }
      if (snapshot.status === "complete") {
        await this.loadResult();
        return;
      }
      await this.pullQuery();
    } catch (err) {
      this.fail(err);
    }
  }

  private async pullQuery(): Promise<void> {
    const outcome = await this.api.getQuery(this.state.sessionId);
    if (outcome.kind === "complete") {
      await this.loadResult();
      return;
    }
    if (outcome.kind === "aborted") {
      this.state.phase = "aborted";
      this.state.query = null;
      this.emit();
      return;
    }
    this.state.query = outcome.query;
    this.state.progress = outcome.query.progress;
    this.state.phase = "awaiting";
    this.state.banner = null;
    this.emit();
  }

  private async loadResult(): Promise<void> {
    this.state.result = await this.api.getResult(this.state.sessionId);
    this.state.query = null;
    this.state.phase = "complete";
    this.emit();
  }

  /**
   * Submit the user's judgment for the query on screen. Ignored unless a
   * query is displayed and nothing else is in flight.
   */
  async answer(answer: Answer): Promise<void> {
    if (this.state.phase !== "awaiting" || this.inFlight || !this.state.query) {
      return;
    }
    const queryId = this.state.query.query_id;
    this.inFlight = true;
    this.state.phase = "submitting";
    this.emit();
    try {
      const outcome = await this.api.submitAnswer(this.state.sessionId, queryId, answer);
      if (outcome.kind === "accepted") {
        this.state.answeredHere.push({ queryId, answer });
        this.state.progress = outcome.progress;
        if (outcome.status === "complete") {
          await this.loadResult();
        } else {
          await this.pullQuery();
        }
      } else if (outcome.kind === "conflict") {
        // stale tab or double click: resynchronize to the server's pending
        if (outcome.pending) {
          this.state.query = outcome.pending;
          this.state.progress = outcome.pending.progress;
          this.state.phase = "awaiting";
          this.state.banner = "Answer was out of date; showing the current pair.";
          this.emit();
        } else if (outcome.status === "complete") {
          await this.loadResult();
        } else {
          this.state.phase = "aborted";
          this.emit();
        }
      } else {
        this.state.phase = "awaiting";
        this.state.banner = outcome.detail;
        this.emit();
      }
    } catch (err) {
      // network failure: keep the same query on screen, never resubmit
      this.state.phase = "awaiting";
      this.state.banner = `Connection problem: ${message(err)}. The answer was not recorded; retry.`;
      this.emit();
    } finally {
      this.inFlight = false;
    }
  }

  /** Roll back the most recent answer (server-side truncate and replay). */
  async undo(): Promise<void> {
    if (this.inFlight || (this.state.phase !== "awaiting" && this.state.phase !== "complete")) {
      return;
    }
    if ((this.state.progress?.answered ?? 0) < 1) {
      this.state.banner = "Nothing to undo.";
      this.emit();
      return;
    }
    this.inFlight = true;
    this.state.phase = "submitting";
    this.emit();
    try {
      const { pending, progress } = await this.api.undo(this.state.sessionId, 1);
      this.state.answeredHere.pop();
      this.state.progress = progress;
      this.state.result = null;
      if (pending) {
        this.state.query = pending;
        this.state.phase = "awaiting";
        this.state.banner = "Last answer undone.";
        this.emit();
      } else {
        await this.pullQuery();
      }
    } catch (err) {
      this.fail(err);
    } finally {
      this.inFlight = false;
    }
  }

  private fail(err: unknown): void {
    this.state.phase = "error";
    this.state.banner = message(err);
    this.emit();
  }
}

function message(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
