import { describe, expect, it } from "vitest";

import { StudyApi } from "../src/api";
import { SessionController, SessionView } from "../src/session";
import { Progress, RatingTaskPayload, StatsResponse } from "../src/types";
import { MockService } from "./mock_service";

/** Records every view transition; stands in for the DOM layer. */
class RecordingView implements SessionView {
  tasksShown: RatingTaskPayload[] = [];
  progressSeen: Progress[] = [];
  stats: StatsResponse | null = null;
  retries: Array<{ message: string; retry: () => void }> = [];
  busy = false;

  showTask(task: RatingTaskPayload, progress: Progress): void {
    this.tasksShown.push(task);
    this.progressSeen.push(progress);
  }

  showStats(stats: StatsResponse): void {
    this.stats = stats;
  }

  showRetry(message: string, retry: () => void): void {
    this.retries.push({ message, retry });
  }

  setBusy(busy: boolean): void {
    this.busy = busy;
  }

  get currentTask(): RatingTaskPayload {
    return this.tasksShown[this.tasksShown.length - 1];
  }
}

function makeRig() {
  const service = new MockService();
  const api = new StudyApi("http://mock", "fixture", service.transport());
  const view = new RecordingView();
  const controller = new SessionController(api, view);
  return { service, api, view, controller };
}

describe("scripted 10-task session", () => {
  it("records all ten rankings and ends on the stats view", async () => {
    const { service, view, controller } = makeRig();
    await controller.start();
    let guard = 0;
    while (!controller.done && guard++ < 50) {
      await controller.choose(guard % 2 ? "First" : "Second");
    }
    expect(service.records.size).toBe(10);
    expect(controller.done).toBe(true);
    expect(view.stats).not.toBeNull();
    expect(view.stats!.complete).toBe(true);
    expect(view.stats!.total).toBe(10);
    // tasks were served strictly forward; none repeated
    const ids = view.tasksShown.map((t) => t.task_id);
    expect(new Set(ids).size).toBe(ids.length);
  });

  it("absorbs a rapid double-click into a single submission", async () => {
    const { service, controller } = makeRig();
    await controller.start();
    const before = service.postCount;
    // no await between the two calls: second lands while first is in flight
    const both = Promise.all([controller.choose("First"), controller.choose("First")]);
    await both;
    expect(service.postCount - before).toBe(1);
    expect(service.records.size).toBe(1);
  });

  it("absorbs a service-side duplicate as already answered", async () => {
    const { service, api, view, controller } = makeRig();
    await controller.start();
    const task = view.currentTask;
    await api.rank(task.task_id, "Second"); // a stray submission already landed
    await controller.choose("First");
    expect(service.records.get(task.task_id)).toBe("Second"); // first record wins
    expect(view.currentTask.task_id).not.toBe(task.task_id); // UI moved on
  });

  it("buffers the choice through a disconnect and resumes the same task", async () => {
    const { service, view, controller } = makeRig();
    await controller.start();
    const task = view.currentTask;
    service.failNext = 1; // the submission attempt dies at the transport
    await controller.choose("Second");
    expect(view.retries).toHaveLength(1);
    expect(service.records.size).toBe(0);
    // service is back; the retry resubmits the buffered choice unchanged
    view.retries[0].retry();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(service.records.get(task.task_id)).toBe("Second");
    expect(view.currentTask.task_id).not.toBe(task.task_id);
  });

  it("retries the task fetch after a disconnect without losing place", async () => {
    const { service, view, controller } = makeRig();
    service.failNext = 1; // GET next fails before anything renders
    await controller.start();
    expect(view.retries).toHaveLength(1);
    view.retries[0].retry();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(view.tasksShown).toHaveLength(1);
    expect(view.currentTask.task_id).toBe(service.tasks[0].task_id);
  });

  it("network traffic never contains hidden-field substrings", async () => {
    const { service, controller } = makeRig();
    await controller.start();
    let guard = 0;
    while (!controller.done && guard++ < 50) {
      await controller.choose("First");
    }
    const traffic = service.traffic.join("\n");
    for (const needle of service.forbidden) {
      expect(traffic).not.toContain(needle);
    }
  });

  it("ignores further choices once the session is complete", async () => {
    const { service, controller } = makeRig();
    await controller.start();
    let guard = 0;
    while (!controller.done && guard++ < 50) {
      await controller.choose("First");
    }
    const posts = service.postCount;
    await controller.choose("Second");
    expect(service.postCount).toBe(posts);
  });
});
