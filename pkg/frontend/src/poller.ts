// Polling loop for live run metrics. The interval is injectable so contract
// tests can run at millisecond scale; the app uses 1 s.

import type { ApiClient } from "./api.js";
import type { RunView } from "./types.js";

const TERMINAL = new Set(["finished", "failed", "stopped"]);

export class RunPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  last: RunView | null = null;

  constructor(
    private client: ApiClient,
    private runId: string,
    private onUpdate: (run: RunView) => void,
    private intervalMs = 1000,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    if (this.inFlight) return; // never stack requests behind a slow server
    this.inFlight = true;
    try {
      const run = await this.client.getRun(this.runId);
      this.last = run;
      this.onUpdate(run);
      if (TERMINAL.has(run.status)) {
        this.stop();
      }
    } catch {
      // transient polling errors are retried on the next interval
    } finally {
      this.inFlight = false;
    }
  }
}
