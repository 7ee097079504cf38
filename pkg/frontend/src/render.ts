/** DOM builders for the queue list and the six-channel joint viewer. */

import { JointDetail, QueueItem, Verdict } from "./api.js";
import { decodeBase64, decodePgm, drawToCanvas } from "./pgm.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderQueue(
  container: HTMLElement,
  items: QueueItem[],
  onSelect: (jointId: string) => void,
): void {
  container.replaceChildren();
  if (items.length === 0) {
    container.appendChild(el("p", "empty-state", "No joints waiting for review."));
    return;
  }
  const list = el("ul", "queue-list");
  for (const item of items) {
    const row = el("li", `queue-row status-${item.status}`);
    row.dataset.jointId = item.joint_id;
    row.appendChild(el("span", "joint-id", item.joint_id));
    row.appendChild(el("span", "board", item.board_type));
    row.appendChild(el("span", "score", `P(defect) ${item.score.toFixed(3)}`));
    row.addEventListener("click", () => onSelect(item.joint_id));
    list.appendChild(row);
  }
  container.appendChild(list);
}

export interface ViewerCallbacks {
  onDecision: (jointId: string, verdict: Verdict) => void;
}

export function renderJoint(
  container: HTMLElement,
  detail: JointDetail,
  callbacks: ViewerCallbacks,
): void {
  container.replaceChildren();

  const header = el("div", "joint-header");
  header.appendChild(el("h2", undefined, detail.joint_id));
  const badge = el(
    "span",
    detail.score >= detail.threshold ? "badge flagged" : "badge",
    `flagged: P(defect) ${detail.score.toFixed(3)} ≥ τ ${detail.threshold.toFixed(3)}`,
  );
  header.appendChild(badge);
  header.appendChild(el("span", "board", `board ${detail.board_type}`));
  container.appendChild(header);

  const grid = el("div", "channel-grid");
  detail.channels.forEach((payload, k) => {
    const cell = el("figure", "channel-cell");
    const canvas = document.createElement("canvas");
    canvas.className = "channel-canvas";
    try {
      drawToCanvas(canvas, decodePgm(decodeBase64(payload)));
    } catch {
      cell.classList.add("channel-error");
    }
    cell.appendChild(canvas);
    if (!detail.padded[k]) {
      const overlay = el("div", "roi-overlay");
      const r = detail.roi_in_patch;
      overlay.style.left = `${r.x0}px`;
      overlay.style.top = `${r.y0}px`;
      overlay.style.width = `${r.x1 - r.x0}px`;
      overlay.style.height = `${r.y1 - r.y0}px`;
      cell.appendChild(overlay);
    }
    const label = detail.padded[k] ? `slice ${k} (padded)` : `slice ${k}`;
    const caption = el("figcaption", detail.padded[k] ? "padded" : undefined, label);
    cell.appendChild(caption);
    grid.appendChild(cell);
  });
  container.appendChild(grid);

  const controls = el("div", "decision-controls");
  const confirm = el("button", "confirm", "Confirm defect");
  const override = el("button", "override", "Override: normal");
  const done = detail.status !== "pending";
  confirm.disabled = done;
  override.disabled = done;
  const lock = () => {
    confirm.disabled = true;
    override.disabled = true;
  };
  confirm.addEventListener("click", () => {
    lock(); // optimistic: exactly one POST per click
    callbacks.onDecision(detail.joint_id, "confirmed_defect");
  });
  override.addEventListener("click", () => {
    lock();
    callbacks.onDecision(detail.joint_id, "overridden_normal");
  });
  controls.appendChild(confirm);
  controls.appendChild(override);
  if (done) {
    controls.appendChild(
      el("span", "decided-note", `decided: ${detail.status} by ${detail.decided_by ?? "?"}`),
    );
  }
  container.appendChild(controls);
}

export function showBanner(container: HTMLElement, message: string, kind: string): void {
  let banner = container.querySelector<HTMLElement>(".banner");
  if (!banner) {
    banner = el("div", "banner");
    container.prepend(banner);
  }
  banner.className = `banner banner-${kind}`;
  banner.textContent = message;
}

export function clearBanner(container: HTMLElement): void {
  container.querySelector(".banner")?.remove();
}
