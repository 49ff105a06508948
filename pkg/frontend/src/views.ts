import { Progress, RatingTaskPayload, StatsResponse } from "./types.js";
import { SessionView } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function personaPanel(persona: Record<string, unknown>): HTMLElement {
  const panel = el("section", "persona-panel");
  panel.appendChild(el("h2", undefined, "Client persona"));
  const pre = el("pre", "persona-json");
  pre.textContent = JSON.stringify(persona, null, 2);
  panel.appendChild(pre);
  return panel;
}

function historyPanel(task: RatingTaskPayload): HTMLElement {
  const panel = el("section", "history-panel");
  panel.appendChild(el("h2", undefined, "Dialogue so far"));
  const list = el("div", "history-scroll");
  for (const turn of task.history) {
    const row = el("div", `turn turn-${turn.role}`);
    row.appendChild(el("span", "turn-role", turn.role === "coach" ? "Coach" : "Client"));
    row.appendChild(el("span", "turn-text", turn.text));
    list.appendChild(row);
  }
  panel.appendChild(list);
  return panel;
}

/**
 * The two candidate cards render in served order with identical styling;
 * nothing distinguishes them except the neutral First/Second labels.
 */
function candidateCards(
  task: RatingTaskPayload,
  onChoose: (choice: "First" | "Second") => void
): HTMLElement {
  const wrap = el("section", "candidates");
  const entries: Array<["First" | "Second", string, string]> = [
    ["First", task.candidate_first, "1"],
    ["Second", task.candidate_second, "2"],
  ];
  for (const [label, text, key] of entries) {
    const card = el("article", "candidate-card");
    card.appendChild(el("h3", undefined, label));
    card.appendChild(el("p", "candidate-text", text));
    const button = el("button", "choose-button", `Prefer ${label} (${key})`);
    button.addEventListener("click", () => onChoose(label));
    card.appendChild(button);
    wrap.appendChild(card);
  }
  return wrap;
}

function rubricDrawer(rubric: string): HTMLElement {
  const drawer = el("details", "rubric-drawer");
  drawer.appendChild(el("summary", undefined, "Scoring rubric"));
  const pre = el("pre", "rubric-text");
  pre.textContent = rubric;
  drawer.appendChild(pre);
  return drawer;
}

export class PageView implements SessionView {
  private rubric = "";
  private choiceHandler: ((choice: "First" | "Second") => void) | null = null;

  constructor(private readonly root: HTMLElement) {}

  setRubric(text: string): void {
    this.rubric = text;
  }

  onChoice(handler: (choice: "First" | "Second") => void): void {
    this.choiceHandler = handler;
  }

  setBusy(busy: boolean): void {
    this.root.classList.toggle("busy", busy);
    for (const button of this.root.querySelectorAll("button")) {
      (button as HTMLButtonElement).disabled = busy;
    }
  }

  showTask(task: RatingTaskPayload, progress: Progress): void {
    this.root.replaceChildren();
    const header = el("header", "task-header");
    header.appendChild(el("span", "group-label", task.group_label));
    header.appendChild(
      el("span", "progress", `Task ${progress.answered + 1} of ${progress.total}`)
    );
    this.root.appendChild(header);
    this.root.appendChild(personaPanel(task.persona));
    this.root.appendChild(historyPanel(task));
    this.root.appendChild(
      candidateCards(task, (choice) => this.choiceHandler?.(choice))
    );
    if (this.rubric) {
      this.root.appendChild(rubricDrawer(this.rubric));
    }
  }

  showStats(stats: StatsResponse): void {
    this.root.replaceChildren();
    const panel = el("section", "stats-panel");
    panel.appendChild(el("h2", undefined, "Session complete"));
    panel.appendChild(
      el(
        "p",
        "overall",
        `Overall agreement: ${stats.agreed}/${stats.total} = ${stats.overall_pct.toFixed(1)}%`
      )
    );
    const table = el("table", "stats-table");
    const head = el("tr");
    for (const column of ["Group", "All", "Top half (high-gap)"]) {
      head.appendChild(el("th", undefined, column));
    }
    table.appendChild(head);
    for (const group of stats.groups) {
      const row = el("tr");
      row.appendChild(el("td", undefined, group.label));
      row.appendChild(
        el("td", undefined, `${group.agreed}/${group.total} = ${group.pct.toFixed(1)}%`)
      );
      row.appendChild(
        el(
          "td",
          undefined,
          `${group.top_half_agreed}/${group.top_half_total} = ${group.top_half_pct.toFixed(1)}%`
        )
      );
      table.appendChild(row);
    }
    panel.appendChild(table);
    this.root.appendChild(panel);
  }

  showRetry(message: string, retry: () => void): void {
    const existing = this.root.querySelector(".retry-banner");
    existing?.remove();
    const banner = el("div", "retry-banner");
    banner.appendChild(el("span", undefined, message));
    const button = el("button", "retry-button", "Retry");
    button.addEventListener("click", () => {
      banner.remove();
      retry();
    });
    banner.appendChild(button);
    this.root.prepend(banner);
  }
}
