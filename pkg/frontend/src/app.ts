import { ApiClient } from "./api.js";
import { BatchController } from "./batch.js";
import { DashboardController, historyRows } from "./dashboard.js";
import { BrowserDraftStore } from "./draft.js";
import { ANSWER_VALUES, type Answer } from "./types.js";

const KEY_TO_ANSWER: Record<string, Answer> = { y: "yes", n: "no", u: "unsure" };

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

class AnnotateView {
  private batch: BatchController | null = null;
  // the question the y/n/u keys act on, as [taskIndex, classIndex]
  private cursor: [number, number] = [0, 0];

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    const name = window.localStorage.getItem("rareloop-annotator") ?? "";
    const annotator = name || window.prompt("Annotator name?") || "";
    if (!annotator) {
      this.root.replaceChildren(el("p", "banner", "An annotator name is required."));
      return;
    }
    window.localStorage.setItem("rareloop-annotator", annotator);
    this.batch = new BatchController(this.api, annotator, {
      drafts: new BrowserDraftStore(),
    });
    document.addEventListener("keydown", (ev) => this.onKey(ev));
    await this.batch.loadNext();
    this.render();
  }

  private onKey(ev: KeyboardEvent): void {
    if (!this.batch || this.batch.phase !== "labeling") return;
    if (ev.target instanceof HTMLInputElement) return;
    const answer = KEY_TO_ANSWER[ev.key];
    const views = this.batch.view();
    const [ti, qi] = this.cursor;
    const task = views[ti];
    if (answer && task) {
      const cls = Object.keys(task.questions)[qi];
      if (cls) {
        this.batch.setAnswer(task.doc_id, cls, answer);
        this.advanceCursor();
        this.render();
      }
    } else if (ev.key === "j" || ev.key === "ArrowDown") {
      this.advanceCursor();
      this.render();
    }
  }

  private advanceCursor(): void {
    if (!this.batch) return;
    const views = this.batch.view();
    let [ti, qi] = this.cursor;
    const current = views[ti];
    const nq = current ? Object.keys(current.questions).length : 0;
    qi += 1;
    if (qi >= nq) {
      qi = 0;
      ti = Math.min(ti + 1, Math.max(views.length - 1, 0));
    }
    this.cursor = [ti, qi];
  }

  private render(): void {
    const batch = this.batch;
    if (!batch) return;
    const frame = el("div", "annotate");
    if (batch.banner) {
      const banner = el("div", "banner", batch.banner + " ");
      const retry = el("button", "", "Retry") as HTMLButtonElement;
      retry.onclick = async () => {
        await batch.loadNext();
        this.render();
      };
      banner.appendChild(retry);
      frame.appendChild(banner);
    }
    if (batch.phase === "idle") {
      frame.appendChild(el("p", "idle", "No tasks waiting."));
      const retry = el("button", "", "Check again") as HTMLButtonElement;
      retry.onclick = async () => {
        await batch.loadNext();
        this.render();
      };
      frame.appendChild(retry);
    }
    const [cti, cqi] = this.cursor;
    batch.view().forEach((task, ti) => {
      const card = el("div", "task");
      card.appendChild(el("div", "position", `${task.position} / ${task.total}`));
      card.appendChild(el("blockquote", "text", task.text));
      for (const issue of task.issues) card.appendChild(el("div", "issue", issue));
      Object.entries(task.questions).forEach(([cls, question], qi) => {
        const row = el(
          "div",
          ti === cti && qi === cqi ? "question current" : "question",
        );
        row.appendChild(el("span", "prompt", question));
        for (const value of ANSWER_VALUES) {
          const btn = el(
            "button",
            task.answers[cls] === value ? "answer picked" : "answer",
            value,
          ) as HTMLButtonElement;
          btn.onclick = () => {
            batch.setAnswer(task.doc_id, cls, value);
            this.cursor = [ti, qi];
            this.render();
          };
          row.appendChild(btn);
        }
        card.appendChild(row);
      });
      frame.appendChild(card);
    });
    if (batch.phase === "labeling" || batch.phase === "submitting") {
      const submit = el("button", "submit", "Submit batch") as HTMLButtonElement;
      submit.disabled = !batch.isComplete() || batch.phase === "submitting";
      submit.onclick = async () => {
        const outcome = await batch.submit();
        if (outcome.kind === "submitted") this.cursor = [0, 0];
        this.render();
      };
      frame.appendChild(submit);
      const gaps = batch.missing().length;
      if (gaps > 0) {
        frame.appendChild(el("span", "gaps", `${gaps} unanswered`));
      }
    }
    this.root.replaceChildren(frame);
  }
}

class DashboardView {
  private readonly dash: DashboardController;

  constructor(api: ApiClient, private readonly root: HTMLElement) {
    this.dash = new DashboardController(api);
  }

  async start(): Promise<void> {
    await this.dash.refresh();
    this.render();
  }

  private render(): void {
    const frame = el("div", "dashboard");
    if (this.dash.banner) frame.appendChild(el("div", "banner", this.dash.banner));
    const view = this.dash.iterations;
    if (view) {
      frame.appendChild(el("h2", "", `Iteration ${view.iteration} (${view.phase})`));
      const advance = el("button", "", "Advance iteration") as HTMLButtonElement;
      advance.onclick = async () => {
        const outcome = await this.dash.advance();
        if (outcome.kind === "blocked") {
          this.dash.banner =
            outcome.undecided === undefined
              ? outcome.detail
              : `${outcome.detail} (${outcome.undecided} undecided)`;
        } else if (outcome.kind === "unreachable") {
          this.dash.banner = outcome.message;
        }
        this.render();
      };
      frame.appendChild(advance);
      const table = el("table", "history");
      const head = el("tr");
      for (const h of ["iter", "class", "ap", "ap_se", "E_mid", "diversity", "", "queried"]) {
        head.appendChild(el("th", "", h));
      }
      table.appendChild(head);
      for (const row of historyRows(view)) {
        const tr = el("tr");
        for (const cell of row) tr.appendChild(el("td", "", cell));
        table.appendChild(tr);
      }
      frame.appendChild(table);
    }
    frame.appendChild(el("h2", "", "Metrics report"));
    // served bytes, shown verbatim
    frame.appendChild(el("pre", "metrics", this.dash.metricsText ?? ""));
    const refresh = el("button", "", "Refresh") as HTMLButtonElement;
    refresh.onclick = async () => {
      await this.dash.refresh();
      this.render();
    };
    frame.appendChild(refresh);
    this.root.replaceChildren(frame);
  }
}

export async function main(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new ApiClient("");
  const route = window.location.hash || "#annotate";
  window.addEventListener("hashchange", () => window.location.reload());
  if (route === "#dashboard") {
    await new DashboardView(api, root).start();
  } else {
    await new AnnotateView(api, root).start();
  }
}

void main();
