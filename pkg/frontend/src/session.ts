import { DuplicateSubmission, NetworkError, StudyApi } from "./api.js";
import { Choice, Progress, RatingTaskPayload, StatsResponse } from "./types.js";

/**
 * What the controller needs from the page. The view only ever sees the
 * served task payload; answered tasks are never revisited, and the stats
 * view appears only once the service flags the session complete.
 */
export interface SessionView {
  showTask(task: RatingTaskPayload, progress: Progress): void;
  showStats(stats: StatsResponse): void;
  /** Network trouble: keep the page, offer retry. */
  showRetry(message: string, retry: () => void): void;
  setBusy(busy: boolean): void;
}

export class SessionController {
  private current: RatingTaskPayload | null = null;
  /** The unacknowledged choice; survives transport failures. */
  private pending: Choice | null = null;
  private inFlight = false;
  private finished = false;

  constructor(private readonly api: StudyApi, private readonly view: SessionView) {}

  get done(): boolean {
    return this.finished;
  }

  /** Fetch and render the next unanswered task, or the final stats. */
  async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.view.setBusy(true);
    try {
      const next = await this.api.next();
      if (next.done) {
        const stats = await this.api.stats();
        this.finished = true;
        this.current = null;
        this.view.showStats(stats);
      } else {
        this.current = next.task!;
        this.view.showTask(next.task!, next.progress);
      }
    } catch (err) {
      if (err instanceof NetworkError) {
        this.view.showRetry(`Cannot reach the study service: ${err.message}`, () => {
          void this.advance();
        });
        return;
      }
      throw err;
    } finally {
      this.view.setBusy(false);
    }
  }

  /**
   * Submit a ranking for the current task. Re-entrant calls while a
   * submission is in flight are ignored (rapid double-click), and a
   * duplicate error from the service is absorbed as "already answered".
   */
  async choose(choice: Choice): Promise<void> {
    if (this.inFlight || this.finished || this.current === null) {
      return;
    }
    this.pending = choice;
    await this.submitPending();
  }

  private async submitPending(): Promise<void> {
    if (this.pending === null || this.current === null) {
      return;
    }
    this.inFlight = true;
    this.view.setBusy(true);
    const task = this.current;
    const choice = this.pending;
    try {
      await this.api.rank(task.task_id, choice);
      this.pending = null;
    } catch (err) {
      if (err instanceof DuplicateSubmission) {
        // The service already holds a record for this task; move on.
        this.pending = null;
      } else if (err instanceof NetworkError) {
        // Keep the buffered choice; the retry resubmits it unchanged.
        this.view.setBusy(false);
        this.inFlight = false;
        this.view.showRetry("Submission did not reach the service.", () => {
          void this.submitPending();
        });
        return;
      } else {
        this.inFlight = false;
        this.view.setBusy(false);
        throw err;
      }
    }
    this.inFlight = false;
    await this.advance();
  }
}
