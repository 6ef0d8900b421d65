/** Typed client for the judgment collection HTTP API.
 *
 * Transport failures (server unreachable, connection dropped) surface as
 * ApiError with no status; HTTP error replies carry their status and the
 * server's error message.  Callers decide what is retryable: transport
 * errors always are, 4xx never are.
 */

export interface BackgroundView {
  title: string;
  section_title: string;
  abstract: string;
}

export interface HistoryTurn {
  q: string;
  a: string;
}

export interface CandidateView {
  label: string;
  question: string;
  answer: string;
}

export interface TaskView {
  task_id: string;
  background: BackgroundView;
  history: HistoryTurn[];
  candidates: CandidateView[];
  criteria: string[];
}

export interface NextTaskReply {
  done: boolean;
  task: TaskView | null;
  remaining?: number;
}

export interface VoteReply {
  recorded: boolean;
  detail?: string;
  votes?: number;
}

export type Choice = "A" | "B";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }

  /** True when trying again could plausibly succeed. */
  get transient(): boolean {
    return this.status === undefined || this.status >= 500;
  }
}

async function parseJson(response: Response): Promise<unknown> {
  let body: unknown;
  try {
    body = await response.json();
  } catch {
    throw new ApiError(`reply from ${response.url} is not JSON`, response.status);
  }
  if (!response.ok) {
    const detail =
      typeof body === "object" && body !== null && "error" in body
        ? String((body as { error: unknown }).error)
        : response.statusText;
    throw new ApiError(detail, response.status);
  }
  return body;
}

export class Client {
  constructor(readonly baseUrl: string) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`cannot reach the annotation server (${String(err)})`);
    }
    return parseJson(response);
  }

  async newSession(): Promise<string> {
    const body = (await this.request("/api/session/new")) as { annotator_id?: unknown };
    if (typeof body.annotator_id !== "string" || !body.annotator_id) {
      throw new ApiError("session reply carried no annotator id");
    }
    return body.annotator_id;
  }

  async nextTask(annotator: string): Promise<NextTaskReply> {
    const query = new URLSearchParams({ annotator });
    return (await this.request(`/api/tasks/next?${query}`)) as NextTaskReply;
  }

  async submitVote(
    taskId: string,
    annotator: string,
    choices: Record<string, Choice>,
  ): Promise<VoteReply> {
    return (await this.request("/api/votes", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, annotator_id: annotator, choices }),
    })) as VoteReply;
  }
}
