// DOM components for the four workspace panels. No framework: each panel is
// a render function over a small mutable view model, re-rendered on change.

import { ApiClient, ApiError } from "./api.js";
import { drawCurves } from "./curves.js";
import { RunPoller } from "./poller.js";
import type {
  ActionView,
  AutonomyLevel,
  Policy,
  ResearchPhase,
  RunView,
} from "./types.js";
import { AUTONOMY_LABELS, RESEARCH_PHASES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

// -- chat panel -------------------------------------------------------------

export interface ChatEntry {
  role: "human" | "assistant" | "system";
  content: string;
  failed?: boolean;
}

export class ChatPanel {
  entries: ChatEntry[] = [];
  phase: ResearchPhase = "experiment_design";
  private lastFailed: string | null = null;

  constructor(
    private root: HTMLElement,
    private client: ApiClient,
    private sessionId: string,
    private onActions: (actions: ActionView[]) => void,
  ) {
    this.render();
  }

  async send(content: string): Promise<void> {
    if (!content.trim()) return;
    this.entries.push({ role: "human", content });
    this.lastFailed = null;
    this.render();
    try {
      const result = await this.client.sendMessage(this.sessionId, content, this.phase);
      this.entries.push({ role: "assistant", content: result.reply });
      this.onActions(result.pending_actions);
    } catch (error) {
      this.lastFailed = content;
      this.entries.push({
        role: "system",
        content: `provider error: ${error instanceof Error ? error.message : error}`,
        failed: true,
      });
    }
    this.render();
  }

  render(): void {
    this.root.replaceChildren();
    const log = el("div", { class: "chat-log" });
    for (const entry of this.entries) {
      const row = el("div", { class: `msg msg-${entry.role}` });
      row.append(el("span", { class: "msg-role" }, entry.role), " ");
      row.append(renderContentWithLinks(entry.content));
      if (entry.failed && this.lastFailed !== null) {
        const retry = el("button", { class: "retry" }, "retry");
        retry.onclick = () => {
          this.entries.pop(); // drop the failure notice
          this.entries.pop(); // and the unanswered human message
          void this.send(this.lastFailed as string);
        };
        row.append(" ", retry);
      }
      log.append(row);
    }
    const phaseSelect = el("select", { class: "phase-select" });
    for (const phase of RESEARCH_PHASES) {
      const opt = el("option", { value: phase }, phase);
      if (phase === this.phase) opt.selected = true;
      phaseSelect.append(opt);
    }
    phaseSelect.onchange = () => {
      this.phase = phaseSelect.value as ResearchPhase;
    };
    const input = el("input", { class: "chat-input", placeholder: "message the assistant" });
    const sendButton = el("button", { class: "send" }, "send");
    const submit = () => {
      const text = input.value;
      input.value = "";
      void this.send(text);
    };
    sendButton.onclick = submit;
    input.onkeydown = (event) => {
      if (event.key === "Enter") submit();
    };
    this.root.append(log, el("div", { class: "chat-controls" }, phaseSelect, input, sendButton));
  }
}

function renderContentWithLinks(content: string): DocumentFragment {
  // linkify produced artifact references like figure_id=erp-0123456789
  const fragment = document.createDocumentFragment();
  const pattern = /(figure_id|run_id|report_id)=([A-Za-z0-9_.-]+)/g;
  let cursor = 0;
  for (const match of content.matchAll(pattern)) {
    fragment.append(content.slice(cursor, match.index));
    const [, kind, id] = match;
    const href = kind === "figure_id" ? `/api/figures/${id}` : "#";
    const link = el("a", { href, class: `artifact artifact-${kind}`, "data-id": id }, `${kind}=${id}`);
    fragment.append(link);
    cursor = (match.index ?? 0) + match[0].length;
  }
  fragment.append(content.slice(cursor));
  return fragment;
}

// -- autonomy console --------------------------------------------------------

export class AutonomyConsole {
  policy: Policy = {};
  actions = new Map<string, ActionView>();

  constructor(
    private root: HTMLElement,
    private client: ApiClient,
    private sessionId: string,
  ) {}

  async load(): Promise<void> {
    this.policy = (await this.client.getAutonomy(this.sessionId)).policy;
    this.render();
  }

  absorb(actions: ActionView[]): void {
    for (const action of actions) this.actions.set(action.action_id, action);
    this.render();
  }

  async setLevel(phase: string, level: AutonomyLevel): Promise<void> {
    this.policy = { ...this.policy, [phase]: level }; // optimistic
    this.render();
    const result = await this.client.putAutonomy(this.sessionId, { [phase]: level });
    this.policy = result.policy; // server reconciliation
    this.render();
  }

  async approve(actionId: string): Promise<void> {
    const action = this.actions.get(actionId);
    if (!action) return;
    const optimistic = { ...action, state: "approved" as const };
    this.actions.set(actionId, optimistic);
    this.render();
    try {
      this.actions.set(actionId, await this.client.approveAction(this.sessionId, actionId));
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        const fresh = await this.client.getSession(this.sessionId);
        const server = fresh.actions[actionId];
        if (server) this.actions.set(actionId, server);
      } else {
        this.actions.set(actionId, action);
      }
    }
    this.render();
  }

  async reject(actionId: string, reason: string): Promise<void> {
    const action = this.actions.get(actionId);
    if (!action) return;
    try {
      this.actions.set(actionId, await this.client.rejectAction(this.sessionId, actionId, reason));
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        const fresh = await this.client.getSession(this.sessionId);
        const server = fresh.actions[actionId];
        if (server) this.actions.set(actionId, server);
      }
    }
    this.render();
  }

  render(): void {
    this.root.replaceChildren();
    const sliders = el("div", { class: "autonomy-sliders" });
    for (const phase of RESEARCH_PHASES) {
      const level = (this.policy[phase] ?? 1) as AutonomyLevel;
      const slider = el("input", {
        type: "range",
        min: "0",
        max: "3",
        step: "1",
        value: String(level),
        "data-phase": phase,
      });
      slider.onchange = () => {
        void this.setLevel(phase, Number(slider.value) as AutonomyLevel);
      };
      sliders.append(
        el("label", { class: "autonomy-row" },
          el("span", { class: "phase-name" }, phase),
          slider,
          el("span", { class: "level-label" }, AUTONOMY_LABELS[level]),
        ),
      );
    }

    const pending = el("ul", { class: "pending-actions" });
    const review = el("ul", { class: "review-queue" });
    for (const action of this.actions.values()) {
      const item = el(
        "li",
        { class: `action action-${action.state}`, "data-action-id": action.action_id },
        `${action.action_id} ${action.kind} [${action.state}]`,
      );
      if (action.state === "pending") {
        const approveButton = el("button", { class: "approve" }, "approve");
        approveButton.onclick = () => void this.approve(action.action_id);
        const reasonField = el("input", { class: "reason", placeholder: "reason" });
        const rejectButton = el("button", { class: "reject" }, "reject");
        rejectButton.onclick = () => void this.reject(action.action_id, reasonField.value);
        item.append(" ", approveButton, " ", rejectButton, " ", reasonField);
        pending.append(item);
      } else if (action.state === "flagged_for_review") {
        review.append(item);
      } else {
        if (action.state === "rejected" && action.note) {
          item.append(el("span", { class: "reject-reason" }, ` (${action.note})`));
        }
        if (action.result_ref) {
          item.append(` -> ${Object.entries(action.result_ref).map(([k, v]) => `${k}=${v}`).join(", ")}`);
        }
        pending.append(item);
      }
    }
    this.root.append(
      el("h3", {}, "autonomy"),
      sliders,
      el("h3", {}, "actions"),
      pending,
      el("h3", {}, "review queue (auto-executed)"),
      review,
    );
  }
}

// -- run monitor -----------------------------------------------------------------

export class RunMonitor {
  runs = new Map<string, RunView>();
  private pollers = new Map<string, RunPoller>();

  constructor(
    private root: HTMLElement,
    private client: ApiClient,
    private intervalMs = 1000,
  ) {}

  async refresh(): Promise<void> {
    const { runs } = await this.client.listRuns();
    for (const run of runs) this.track(run);
    this.render();
  }

  track(run: RunView): void {
    this.runs.set(run.run_id, run);
    const live = run.status === "running" || run.status === "queued";
    if (live && !this.pollers.has(run.run_id)) {
      const poller = new RunPoller(
        this.client,
        run.run_id,
        (update) => {
          this.runs.set(update.run_id, update);
          this.render();
        },
        this.intervalMs,
      );
      this.pollers.set(run.run_id, poller);
      poller.start();
    }
  }

  stop(): void {
    for (const poller of this.pollers.values()) poller.stop();
  }

  render(): void {
    this.root.replaceChildren(el("h3", {}, "runs"));
    for (const run of this.runs.values()) {
      const card = el("div", { class: `run run-${run.status}`, "data-run-id": run.run_id });
      const title = el("div", { class: "run-title" },
        `${run.run_id} (${run.subject_id ?? "?"}) ${run.status}`);
      if (run.status === "finished" && run.eval_accuracy !== null) {
        title.append(el("span", { class: "eval-badge" }, ` eval ${run.eval_accuracy.toFixed(3)}`));
      }
      const canvas = el("canvas", { width: "360", height: "120", class: "curves" });
      card.append(title, canvas, el("div", { class: "epochs" }, `epochs: ${run.metrics.length}`));
      this.root.append(card);
      drawCurves(canvas, run.metrics);
    }
  }
}

// -- figure gallery -----------------------------------------------------------------

export class FigureGallery {
  constructor(
    private root: HTMLElement,
    private client: ApiClient,
  ) {}

  async refresh(): Promise<void> {
    const { figures } = await this.client.listFigures();
    this.root.replaceChildren(el("h3", {}, "figures"));
    const grid = el("div", { class: "gallery" });
    for (const figure of figures) {
      const img = el("img", {
        src: this.client.figureImageUrl(figure.figure_id),
        class: "thumb",
        "data-figure-id": figure.figure_id,
      });
      img.onclick = () => this.zoom(figure.figure_id);
      const download = el(
        "a",
        { href: this.client.figureDataUrl(figure.figure_id), download: `${figure.figure_id}.data.json` },
        "data",
      );
      grid.append(el("figure", {}, img, el("figcaption", {}, figure.figure_id, " ", download)));
    }
    this.root.append(grid);
  }

  zoom(figureId: string): void {
    const overlay = el("div", { class: "zoom-overlay" });
    const img = el("img", { src: this.client.figureImageUrl(figureId), class: "zoom-img" });
    overlay.onclick = () => overlay.remove();
    overlay.append(img);
    document.body.append(overlay);
  }
}
