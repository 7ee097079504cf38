/** Triage console wiring: 2 s queue polling, selection, decision posting. */

import { ApiClient, ConflictError, Verdict } from "./api.js";
import { clearBanner, renderJoint, renderQueue, showBanner } from "./render.js";

export const POLL_INTERVAL_MS = 2000;

export interface AppElements {
  queue: HTMLElement;
  viewer: HTMLElement;
  status: HTMLElement;
  pager: HTMLElement;
}

export class TriageApp {
  page = 1;
  selected: string | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: ApiClient,
    private els: AppElements,
    private operator: string = "specialist",
  ) {}

  start(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.api.queue(this.page);
      clearBanner(this.els.status);
      renderQueue(this.els.queue, page.items, (id) => void this.select(id));
      this.renderPager(page.total, page.has_more);
      if (this.selected && !page.items.some((i) => i.joint_id === this.selected)) {
        // decided items drop out of the pending filter on the next poll
        if (this.els.viewer.childElementCount === 0) this.selected = null;
      }
    } catch {
      // keep the cached view; surface a non-blocking banner
      showBanner(this.els.status, "service unreachable - showing cached queue", "offline");
    }
  }

  async select(jointId: string): Promise<void> {
    this.selected = jointId;
    try {
      const detail = await this.api.joint(jointId);
      renderJoint(this.els.viewer, detail, {
        onDecision: (id, verdict) => void this.decide(id, verdict),
      });
    } catch {
      showBanner(this.els.status, `could not load ${jointId}`, "offline");
    }
  }

  async decide(jointId: string, verdict: Verdict): Promise<void> {
    try {
      await this.api.decide(jointId, verdict, this.operator);
      showBanner(this.els.status, `${jointId}: recorded ${verdict}`, "ok");
      await this.refresh();
      this.els.viewer.replaceChildren();
      this.selected = null;
    } catch (err) {
      if (err instanceof ConflictError) {
        // another operator got there first: lock controls, show the conflict
        showBanner(this.els.status, `${jointId}: already decided`, "conflict");
        this.lockViewerControls();
      } else {
        showBanner(this.els.status, "decision failed - service unreachable", "offline");
      }
    }
  }

  lockViewerControls(): void {
    for (const b of this.els.viewer.querySelectorAll("button")) {
      b.disabled = true;
    }
  }

  private renderPager(total: number, hasMore: boolean): void {
    this.els.pager.replaceChildren();
    const label = document.createElement("span");
    label.textContent = `page ${this.page} - ${total} pending`;
    const prev = document.createElement("button");
    prev.textContent = "prev";
    prev.disabled = this.page <= 1;
    prev.addEventListener("click", () => {
      this.page = Math.max(1, this.page - 1);
      void this.refresh();
    });
    const next = document.createElement("button");
    next.textContent = "next";
    next.disabled = !hasMore;
    next.addEventListener("click", () => {
      this.page += 1;
      void this.refresh();
    });
    this.els.pager.append(prev, label, next);
  }
}

export function mount(root: Document = document): TriageApp {
  const els: AppElements = {
    queue: root.getElementById("queue")!,
    viewer: root.getElementById("viewer")!,
    status: root.getElementById("status")!,
    pager: root.getElementById("pager")!,
  };
  const app = new TriageApp(new ApiClient(), els);
  app.start();
  return app;
}
