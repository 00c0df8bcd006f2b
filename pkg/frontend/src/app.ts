/** The annotator session state machine, free of any DOM dependency.
 *
 * All campaign state lives on the server; the session only tracks the one
 * pair it is currently showing and whether a judgment POST is in flight.
 * Reconstructing a session (a page reload) therefore resumes exactly where
 * the service cursor left off.
 */

import { ApiClient, Choice, ConflictError, NetworkError, PairView } from "./api.js";

export type Phase = "idle" | "loading" | "annotating" | "submitting" | "error" | "done";

export interface SessionState {
  phase: Phase;
  pair: PairView | null;
  judged: number;
  total: number;
  /** Banner text when phase is "error"; retry() re-attempts the failed step. */
  errorMessage: string | null;
}

export type Listener = (state: SessionState) => void;

export class AnnotatorSession {
  private state: SessionState = {
    phase: "idle",
    pair: null,
    judged: 0,
    total: 0,
    errorMessage: null,
  };
  private listeners: Listener[] = [];
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly annotatorId: string
  ) {}

  getState(): SessionState {
    return { ...this.state };
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private setState(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.getState());
    }
  }

  async start(): Promise<void> {
    await this.fetchNext();
  }

  private async fetchNext(): Promise<void> {
    this.setState({ phase: "loading", errorMessage: null });
    let pair: PairView;
    try {
      pair = await this.api.nextPair(this.annotatorId);
    } catch (err) {
      this.fail(err, () => this.fetchNext());
      return;
    }
    if (pair.done) {
      this.setState({
        phase: "done",
        pair: null,
        judged: pair.progress.judged,
        total: pair.progress.total,
      });
      return;
    }
    this.setState({
      phase: "annotating",
      pair,
      judged: pair.progress.judged,
      total: pair.progress.total,
    });
  }

  /** Submit the annotator's keystroke for the pair on screen.
   *
   * Ignored unless a pair is showing and no POST is in flight, so a held
   * key cannot double-submit. Returns true when a judgment was sent.
   */
  async choose(choice: Choice): Promise<boolean> {
    if (this.state.phase !== "annotating" || this.state.pair === null) {
      return false;
    }
    const pairId = this.state.pair.pair_id!;
    this.setState({ phase: "submitting" });
    try {
      await this.api.submitJudgment(this.annotatorId, pairId, choice);
    } catch (err) {
      if (err instanceof ConflictError) {
        // the service no longer expects this pair; fall through to refetch
        await this.fetchNext();
        return false;
      }
      // keep the current pair on screen so the keystroke is not lost
      this.fail(err, () => this.resubmit(pairId, choice));
      return false;
    }
    await this.fetchNext();
    return true;
  }

  private async resubmit(pairId: string, choice: Choice): Promise<void> {
    this.setState({ phase: "submitting", errorMessage: null });
    try {
      await this.api.submitJudgment(this.annotatorId, pairId, choice);
    } catch (err) {
      if (err instanceof ConflictError) {
        await this.fetchNext();
        return;
      }
      this.fail(err, () => this.resubmit(pairId, choice));
      return;
    }
    await this.fetchNext();
  }

  /** Re-run whatever step last failed; no-op outside the error phase. */
  async retry(): Promise<void> {
    if (this.state.phase !== "error" || this.retryAction === null) {
      return;
    }
    const action = this.retryAction;
    this.retryAction = null;
    await action();
  }

  private fail(err: unknown, retryAction: () => Promise<void>): void {
    const message =
      err instanceof NetworkError
        ? "Cannot reach the annotation service. Check the connection and retry."
        : err instanceof Error
          ? err.message
          : String(err);
    this.retryAction = retryAction;
    this.setState({ phase: "error", errorMessage: message });
  }
}

export const KEY_BINDINGS: Record<string, Choice> = {
  ArrowLeft: "left_blurrier",
  ArrowRight: "right_blurrier",
  s: "skip",
  S: "skip",
};
