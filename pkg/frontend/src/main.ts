import { StudyApi } from "./api.js";
import { SessionController } from "./session.js";
import { PageView } from "./views.js";

/**
 * Entry point. The service URL and session id come from query parameters:
 *   index.html?service=http://127.0.0.1:8321&session=default
 */
async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const service = params.get("service") ?? "http://127.0.0.1:8321";
  const sessionId = params.get("session") ?? "default";

  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app container");
  }
  const api = new StudyApi(service, sessionId);
  const view = new PageView(root);
  try {
    view.setRubric(await api.rubric());
  } catch {
    // rubric is a convenience; the session still runs without it
  }
  const controller = new SessionController(api, view);
  view.onChoice((choice) => void controller.choose(choice));

  // Keyboard shortcuts for rater throughput: 1 = First, 2 = Second.
  window.addEventListener("keydown", (ev) => {
    if (ev.repeat || controller.done) return;
    if (ev.key === "1") void controller.choose("First");
    if (ev.key === "2") void controller.choose("Second");
  });

  await controller.start();
}

void boot();
