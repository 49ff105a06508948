// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import { PageView } from "../src/views";
import { RatingTaskPayload, StatsResponse } from "../src/types";
import fixture from "./fixtures/session_payloads.json";

const task = (fixture.tasks as RatingTaskPayload[])[0];

const stats: StatsResponse = {
  groups: [
    {
      label: task.group_label,
      agreed: 8,
      total: 10,
      pct: 80,
      top_half_agreed: 4,
      top_half_total: 5,
      top_half_pct: 80,
    },
  ],
  agreed: 8,
  total: 10,
  overall_pct: 80,
  top_half_agreed: 4,
  top_half_total: 5,
  top_half_pct: 80,
  complete: true,
};

describe("page view", () => {
  let root: HTMLElement;
  let view: PageView;

  beforeEach(() => {
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById("app")!;
    view = new PageView(root);
  });

  it("renders persona, history, and both candidates in served order", () => {
    view.showTask(task, { answered: 0, total: 10 });
    const personaText = root.querySelector(".persona-json")!.textContent!;
    expect(personaText).toContain("occupations");
    const turns = [...root.querySelectorAll(".turn-text")].map((n) => n.textContent);
    expect(turns).toEqual(task.history.map((t) => t.text));
    const cards = [...root.querySelectorAll(".candidate-card")];
    expect(cards).toHaveLength(2);
    expect(cards[0].querySelector(".candidate-text")!.textContent).toBe(
      task.candidate_first
    );
    expect(cards[1].querySelector(".candidate-text")!.textContent).toBe(
      task.candidate_second
    );
    // neutral styling: identical classes on both cards
    expect(cards[0].className).toBe(cards[1].className);
    expect(root.querySelector(".progress")!.textContent).toBe("Task 1 of 10");
  });

  it("emits the chosen label through the choice handler", () => {
    const chosen: string[] = [];
    view.onChoice((c) => chosen.push(c));
    view.showTask(task, { answered: 3, total: 10 });
    const buttons = [...root.querySelectorAll<HTMLButtonElement>(".choose-button")];
    buttons[1].click();
    buttons[0].click();
    expect(chosen).toEqual(["Second", "First"]);
  });

  it("renders the rubric drawer when a rubric is set", () => {
    view.setRubric("RUBRIC BODY");
    view.showTask(task, { answered: 0, total: 10 });
    expect(root.querySelector(".rubric-text")!.textContent).toBe("RUBRIC BODY");
  });

  it("never renders hidden material", () => {
    view.showTask(task, { answered: 0, total: 10 });
    const html = root.innerHTML;
    for (const needle of fixture.forbidden as string[]) {
      expect(html).not.toContain(needle);
    }
  });

  it("disables buttons while busy", () => {
    view.showTask(task, { answered: 0, total: 10 });
    view.setBusy(true);
    const button = root.querySelector<HTMLButtonElement>(".choose-button")!;
    expect(button.disabled).toBe(true);
    view.setBusy(false);
    expect(button.disabled).toBe(false);
  });

  it("shows the final agreement table", () => {
    view.showStats(stats);
    expect(root.querySelector(".overall")!.textContent).toContain("8/10 = 80.0%");
    expect(root.querySelectorAll(".stats-table tr")).toHaveLength(2);
  });

  it("retry banner invokes the callback and clears itself", () => {
    view.showTask(task, { answered: 0, total: 10 });
    let retried = 0;
    view.showRetry("offline", () => {
      retried += 1;
    });
    const banner = root.querySelector(".retry-banner")!;
    expect(banner.textContent).toContain("offline");
    banner.querySelector<HTMLButtonElement>(".retry-button")!.click();
    expect(retried).toBe(1);
    expect(root.querySelector(".retry-banner")).toBeNull();
  });
});
