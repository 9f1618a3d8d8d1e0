import { ApiClient, ApiError } from "./api.js";
import { MemoryDraftStore, type DraftStore } from "./draft.js";
import {
  ANSWER_VALUES,
  type AnnotationRecord,
  type Answer,
  type FieldError,
  type Task,
} from "./types.js";

export type BatchPhase = "idle" | "loading" | "labeling" | "submitting" | "error";

export type SubmitOutcome =
  | { kind: "submitted"; accepted: number; undecided: number }
  | { kind: "incomplete"; missing: { doc_id: string; cls: string }[] }
  | { kind: "rejected"; status: number; detail: string; errors: FieldError[] }
  | { kind: "unreachable"; message: string }
  | { kind: "busy" };

export interface TaskView {
  position: number;
  total: number;
  doc_id: string;
  text: string;
  questions: Record<string, string>;
  answers: Partial<Record<string, Answer>>;
  issues: string[];
}

/**
 * One annotator's labeling loop: fetch a batch, collect answers, submit,
 * repeat. Every task is handled identically whether it is a real document
 * or an attention check; the submitted payload contains exactly what the
 * annotator entered and nothing else.
 */
export class BatchController {
  phase: BatchPhase = "idle";
  banner: string | null = null;
  tasks: Task[] = [];
  remaining = 0;

  private answers = new Map<string, Partial<Record<string, Answer>>>();
  private taskErrors = new Map<string, string[]>();
  private readonly batchSize: number;
  private readonly drafts: DraftStore;
  private readonly draftKey: string;

  constructor(
    private readonly api: ApiClient,
    readonly annotator: string,
    options: { batchSize?: number; drafts?: DraftStore } = {},
  ) {
    this.batchSize = options.batchSize ?? 50;
    this.drafts = options.drafts ?? new MemoryDraftStore();
    this.draftKey = `rareloop-draft:${annotator}`;
    this.restoreDraft();
  }

  async loadNext(): Promise<void> {
    this.phase = "loading";
    this.banner = null;
    try {
      const page = await this.api.nextTasks(this.annotator, this.batchSize);
      this.tasks = page.tasks;
      this.remaining = page.remaining;
      this.taskErrors.clear();
      this.phase = this.tasks.length > 0 ? "labeling" : "idle";
    } catch (err) {
      // keep whatever is on screen; the annotator retries when the
      // server is back
      this.phase = "error";
      this.banner = err instanceof Error ? err.message : String(err);
    }
  }

  setAnswer(docId: string, cls: string, value: Answer): void {
    const task = this.tasks.find((t) => t.doc_id === docId);
    if (!task) throw new RangeError(`no task for document ${docId}`);
    if (!(cls in task.questions)) throw new RangeError(`no question for class ${cls}`);
    if (!ANSWER_VALUES.includes(value)) throw new RangeError(`bad answer ${value}`);
    const current = this.answers.get(docId) ?? {};
    current[cls] = value;
    this.answers.set(docId, current);
    this.persistDraft();
  }

  answerFor(docId: string, cls: string): Answer | undefined {
    return this.answers.get(docId)?.[cls];
  }

  missing(): { doc_id: string; cls: string }[] {
    const gaps: { doc_id: string; cls: string }[] = [];
    for (const task of this.tasks) {
      const entered = this.answers.get(task.doc_id) ?? {};
      for (const cls of Object.keys(task.questions)) {
        if (entered[cls] === undefined) gaps.push({ doc_id: task.doc_id, cls });
      }
    }
    return gaps;
  }

  isComplete(): boolean {
    return this.tasks.length > 0 && this.missing().length === 0;
  }

  /**
   * Submit the batch. Refused client-side while any question is
   * unanswered or another submit is in flight. On rejection the answers
   * stay put, so calling again resends an identical payload; the server
   * treats a repeat as a replacement, which makes retries safe.
   */
  async submit(): Promise<SubmitOutcome> {
    if (this.phase === "submitting") return { kind: "busy" };
    const gaps = this.missing();
    if (this.tasks.length === 0 || gaps.length > 0) {
      return { kind: "incomplete", missing: gaps };
    }
    const records: AnnotationRecord[] = this.tasks.map((task) => ({
      doc_id: task.doc_id,
      annotator: this.annotator,
      answers: { ...(this.answers.get(task.doc_id) as Record<string, Answer>) },
    }));
    this.phase = "submitting";
    this.banner = null;
    try {
      const result = await this.api.submitLabels(records);
      for (const record of records) this.answers.delete(record.doc_id);
      this.persistDraft();
      this.taskErrors.clear();
      await this.loadNext();
      return { kind: "submitted", ...result };
    } catch (err) {
      if (err instanceof ApiError) {
        this.phase = "labeling";
        this.applyFieldErrors(err.errors, err.detail);
        return {
          kind: "rejected",
          status: err.status,
          detail: err.detail,
          errors: err.errors,
        };
      }
      this.phase = "error";
      this.banner = err instanceof Error ? err.message : String(err);
      return { kind: "unreachable", message: this.banner };
    }
  }

  view(): TaskView[] {
    return this.tasks.map((task, i) => ({
      position: i + 1,
      total: this.tasks.length,
      doc_id: task.doc_id,
      text: task.text,
      questions: task.questions,
      answers: { ...(this.answers.get(task.doc_id) ?? {}) },
      issues: this.taskErrors.get(task.doc_id) ?? [],
    }));
  }

  issuesFor(docId: string): string[] {
    return this.taskErrors.get(docId) ?? [];
  }

  private applyFieldErrors(errors: FieldError[], detail: string): void {
    this.taskErrors.clear();
    for (const e of errors) {
      const task = e.index === null ? undefined : this.tasks[e.index];
      if (!task) continue;
      const message = e.field ? `${e.field}: ${e.error}` : e.error;
      const list = this.taskErrors.get(task.doc_id) ?? [];
      list.push(message);
      this.taskErrors.set(task.doc_id, list);
    }
    if (this.taskErrors.size === 0) this.banner = detail;
  }

  private persistDraft(): void {
    const plain: Record<string, Partial<Record<string, Answer>>> = {};
    for (const [docId, entered] of this.answers) plain[docId] = entered;
    this.drafts.save(this.draftKey, JSON.stringify(plain));
  }

  private restoreDraft(): void {
    const raw = this.drafts.load(this.draftKey);
    if (raw === null) return;
    try {
      const plain = JSON.parse(raw) as Record<string, Partial<Record<string, Answer>>>;
      for (const [docId, entered] of Object.entries(plain)) {
        this.answers.set(docId, entered);
      }
    } catch {
      this.drafts.clear(this.draftKey);
    }
  }
}
