import { JointDetail, QueueItem } from "../src/api.js";

/** Tiny 4x4 gray PGM, base64-encoded like the service sends. */
export function pgmFixture(value = 128): string {
  const header = `P5\n4 4\n255\n`;
  const bytes = new Uint8Array(header.length + 16);
  for (let i = 0; i < header.length; i++) bytes[i] = header.charCodeAt(i);
  bytes.fill(value, header.length);
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

export function queueItem(overrides: Partial<QueueItem> = {}): QueueItem {
  return {
    joint_id: "J00001",
    board_type: "B01",
    score: 0.97,
    threshold: 0.34,
    status: "pending",
    enqueued_at: 1000,
    decided_by: null,
    decided_at: null,
    n_slices: 4,
    ...overrides,
  };
}

export function jointDetail(overrides: Partial<JointDetail> = {}): JointDetail {
  return {
    ...queueItem(),
    channels: Array.from({ length: 6 }, (_, k) => pgmFixture(k < 4 ? 150 : 0)),
    padded: [false, false, false, false, true, true],
    roi_in_patch: { x0: 20, y0: 22, x1: 100, y1: 104 },
    ...overrides,
  };
}

export interface StubCall {
  url: string;
  init?: RequestInit;
}

/** fetch stub driven by a url-prefix -> responder table. */
export function stubFetch(
  routes: Record<string, (call: StubCall) => { status: number; body: unknown }>,
): { fetcher: typeof fetch; calls: StubCall[] } {
  const calls: StubCall[] = [];
  const fetcher = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const call = { url, init };
    calls.push(call);
    for (const [prefix, responder] of Object.entries(routes)) {
      if (url.startsWith(prefix)) {
        const { status, body } = responder(call);
        return new Response(JSON.stringify(body), {
          status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    throw new Error(`unstubbed fetch: ${url}`);
  }) as typeof fetch;
  return { fetcher, calls };
}

export function dom(): { queue: HTMLElement; viewer: HTMLElement; status: HTMLElement; pager: HTMLElement } {
  document.body.innerHTML =
    '<div id="status"></div><div id="queue"></div><div id="pager"></div><div id="viewer"></div>';
  return {
    queue: document.getElementById("queue")!,
    viewer: document.getElementById("viewer")!,
    status: document.getElementById("status")!,
    pager: document.getElementById("pager")!,
  };
}
