// Bootstrap: one session, four panels, all state held by the server.

import { ApiClient } from "./api.js";
import { AutonomyConsole, ChatPanel, FigureGallery, RunMonitor } from "./ui.js";

async function boot(): Promise<void> {
  const client = new ApiClient("");
  const { session_id } = await client.createSession();

  const autonomy = new AutonomyConsole(
    document.getElementById("autonomy") as HTMLElement,
    client,
    session_id,
  );
  const monitor = new RunMonitor(document.getElementById("runs") as HTMLElement, client);
  const gallery = new FigureGallery(document.getElementById("figures") as HTMLElement, client);

  new ChatPanel(
    document.getElementById("chat") as HTMLElement,
    client,
    session_id,
    (actions) => {
      autonomy.absorb(actions);
      for (const action of actions) {
        if (action.result_ref?.run_id) void monitor.refresh();
        if (action.result_ref?.figure_id) void gallery.refresh();
      }
    },
  );

  await autonomy.load();
  await monitor.refresh();
  await gallery.refresh();
  setInterval(() => void gallery.refresh(), 10_000);

  const header = document.getElementById("session-id");
  if (header) header.textContent = session_id;
}

void boot();
