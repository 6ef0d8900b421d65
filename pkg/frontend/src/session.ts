/** Annotation session state machine.
 *
 * All durable state lives server-side; this object only tracks the current
 * task, the annotator's unsubmitted criterion choices, and one pending vote
 * awaiting acknowledgment.  A vote is never discarded on a transport
 * failure: it stays queued and retry() resubmits it, relying on the
 * server's idempotent duplicate handling.
 */

import { ApiError, Client, Choice, TaskView } from "./api.js";

export type State =
  | { kind: "loading" }
  | {
      kind: "task";
      task: TaskView;
      remaining: number;
      choices: Partial<Record<string, Choice>>;
      notice: string | null;
    }
  | { kind: "done"; completed: number }
  | { kind: "error"; message: string; canRetry: boolean };

export type Listener = (state: State) => void;

interface PendingVote {
  taskId: string;
  choices: Record<string, Choice>;
}

export class Session {
  state: State = { kind: "loading" };
  completed = 0;

  private annotator: string | null = null;
  private pending: PendingVote | null = null;
  private notice: string | null = null;
  private listener: Listener = () => undefined;

  constructor(private readonly client: Client) {}

  onChange(listener: Listener): void {
    this.listener = listener;
  }

  private emit(state: State): void {
    this.state = state;
    this.listener(state);
  }

  async start(): Promise<void> {
    this.emit({ kind: "loading" });
    try {
      if (this.annotator === null) {
        this.annotator = await this.client.newSession();
      }
      if (this.pending !== null) {
        await this.deliverPending();
      }
      await this.advance();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Re-runs whatever failed last: pending vote first, then the task fetch. */
  async retry(): Promise<void> {
    await this.start();
  }

  private async advance(): Promise<void> {
    if (this.annotator === null) throw new ApiError("no session");
    const reply = await this.client.nextTask(this.annotator);
    if (reply.done || reply.task === null) {
      this.emit({ kind: "done", completed: this.completed });
      return;
    }
    this.emit({
      kind: "task",
      task: reply.task,
      remaining: reply.remaining ?? 1,
      choices: {},
      notice: this.takeNotice(),
    });
  }

  private takeNotice(): string | null {
    const notice = this.notice;
    this.notice = null;
    return notice;
  }

  choose(criterion: string, choice: Choice): void {
    if (this.state.kind !== "task") return;
    const choices = { ...this.state.choices, [criterion]: choice };
    this.emit({ ...this.state, choices });
  }

  /** True once every criterion of the current task has a selection. */
  complete(): boolean {
    if (this.state.kind !== "task") return false;
    return this.state.task.criteria.every((c) => this.state.kind === "task" && this.state.choices[c] !== undefined);
  }

  async submit(): Promise<void> {
    if (this.state.kind !== "task" || !this.complete()) return;
    const filled: Record<string, Choice> = {};
    for (const criterion of this.state.task.criteria) {
      const choice = this.state.choices[criterion];
      if (choice === undefined) return;
      filled[criterion] = choice;
    }
    this.pending = { taskId: this.state.task.task_id, choices: filled };
    this.emit({ kind: "loading" });
    try {
      await this.deliverPending();
      await this.advance();
    } catch (err) {
      this.fail(err);
    }
  }

  private async deliverPending(): Promise<void> {
    if (this.pending === null || this.annotator === null) return;
    const reply = await this.client.submitVote(
      this.pending.taskId,
      this.annotator,
      this.pending.choices,
    );
    this.pending = null;
    this.completed += 1;
    if (!reply.recorded) {
      this.notice = "That task was already recorded; moving on.";
    }
  }

  private fail(err: unknown): void {
    const transient = err instanceof ApiError ? err.transient : true;
    const message = err instanceof Error ? err.message : String(err);
    this.emit({ kind: "error", message, canRetry: transient });
  }
}
