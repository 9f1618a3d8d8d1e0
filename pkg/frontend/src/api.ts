import {
  advanceResultSchema,
  iterationsViewSchema,
  sessionSchema,
  submitResultSchema,
  taskPageSchema,
  type AdvanceResult,
  type AnnotationRecord,
  type FieldError,
  type IterationsView,
  type Session,
  type SubmitResult,
  type TaskPage,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Non-2xx response, with whatever detail the server attached. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly errors: FieldError[] = [],
    readonly undecided?: number,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = `request failed with status ${res.status}`;
  let errors: FieldError[] = [];
  let undecided: number | undefined;
  try {
    const body = (await res.json()) as Record<string, unknown>;
    if (typeof body.detail === "string") detail = body.detail;
    if (Array.isArray(body.errors)) errors = body.errors as FieldError[];
    if (typeof body.undecided === "number") undecided = body.undecided;
  } catch {
    // non-JSON error body; keep the status message
  }
  throw new ApiError(res.status, detail, errors, undecided);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const res = await this.fetchFn(this.baseUrl + path);
    await raiseForStatus(res);
    return res.json();
  }

  async session(): Promise<Session> {
    return sessionSchema.parse(await this.getJson("/api/session"));
  }

  async nextTasks(annotator: string, n = 50): Promise<TaskPage> {
    const query = `annotator=${encodeURIComponent(annotator)}&n=${n}`;
    return taskPageSchema.parse(await this.getJson(`/api/tasks/next?${query}`));
  }

  /**
   * Submit annotation records. The payload is exactly the records given;
   * nothing is filled in or dropped on the way out.
   */
  async submitLabels(records: AnnotationRecord[]): Promise<SubmitResult> {
    const res = await this.fetchFn(this.baseUrl + "/api/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(records),
    });
    await raiseForStatus(res);
    return submitResultSchema.parse(await res.json());
  }

  /** The metrics report as served, byte for byte. Never parsed or re-encoded. */
  async metricsText(): Promise<string> {
    const res = await this.fetchFn(this.baseUrl + "/api/metrics");
    await raiseForStatus(res);
    return res.text();
  }

  async iterations(): Promise<IterationsView> {
    return iterationsViewSchema.parse(await this.getJson("/api/iterations"));
  }

  async advance(): Promise<AdvanceResult> {
    const res = await this.fetchFn(this.baseUrl + "/api/iterations/advance", {
      method: "POST",
    });
    await raiseForStatus(res);
    return advanceResultSchema.parse(await res.json());
  }
}
