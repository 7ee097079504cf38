/** Typed client for the triage service HTTP API. */

export interface QueueItem {
  joint_id: string;
  board_type: string;
  score: number;
  threshold: number;
  status: "pending" | "confirmed_defect" | "overridden_normal";
  enqueued_at: number;
  decided_by: string | null;
  decided_at: number | null;
  n_slices: number;
}

export interface QueuePage {
  items: QueueItem[];
  page: number;
  page_size: number;
  total: number;
  has_more: boolean;
}

export interface RoiRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface JointDetail extends QueueItem {
  channels: string[]; // base64 binary PGMs, one per patch channel
  padded: boolean[];
  roi_in_patch: RoiRect;
}

export type Verdict = "confirmed_defect" | "overridden_normal";

export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ConflictError";
  }
}

async function asJson(resp: Response): Promise<unknown> {
  if (resp.status === 409) {
    const body = (await resp.json()) as { detail?: string };
    throw new ConflictError(body.detail ?? "already decided");
  }
  if (!resp.ok) {
    throw new Error(`HTTP ${resp.status}`);
  }
  return resp.json();
}

export class ApiClient {
  constructor(private fetcher: typeof fetch = fetch) {}

  async queue(page = 1, pageSize = 20): Promise<QueuePage> {
    const resp = await this.fetcher(
      `/api/queue?status=pending&page=${page}&page_size=${pageSize}`,
    );
    return (await asJson(resp)) as QueuePage;
  }

  async joint(jointId: string): Promise<JointDetail> {
    const resp = await this.fetcher(`/api/joint/${encodeURIComponent(jointId)}`);
    return (await asJson(resp)) as JointDetail;
  }

  async decide(jointId: string, verdict: Verdict, operator: string): Promise<QueueItem> {
    const resp = await this.fetcher(`/api/joint/${encodeURIComponent(jointId)}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ verdict, operator }),
    });
    return (await asJson(resp)) as QueueItem;
  }
}
