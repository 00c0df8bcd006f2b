/** Typed client for the annotation service HTTP API.
 *
 * The service owns all campaign state; this client is a thin, stateless
 * wrapper that turns transport and status-code failures into typed errors
 * the session state machine can react to.
 */

export type Choice = "left_blurrier" | "right_blurrier" | "skip";

export interface Progress {
  judged: number;
  total: number;
}

export interface PairView {
  done: boolean;
  pair_id?: string;
  left_image_id?: string;
  right_image_id?: string;
  left_url?: string;
  right_url?: string;
  progress: Progress;
}

export interface CampaignInfo {
  pair_count: number;
  target_annotators: number;
  status: string;
}

/** The request never reached the service (offline, DNS, aborted). */
export class NetworkError extends Error {}

/** The service rejected the judgment as out of order (HTTP 409). */
export class ConflictError extends Error {}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchFn = (...args) => fetch(...args),
    private readonly base: string = ""
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (response.status === 409) {
      throw new ConflictError(await errorText(response));
    }
    if (!response.ok) {
      throw new ApiError(await errorText(response), response.status);
    }
    return response;
  }

  async campaign(): Promise<CampaignInfo> {
    const response = await this.request("/api/campaign");
    return (await response.json()) as CampaignInfo;
  }

  async nextPair(annotatorId: string): Promise<PairView> {
    const response = await this.request(
      `/api/pairs/next?annotator=${encodeURIComponent(annotatorId)}`
    );
    return (await response.json()) as PairView;
  }

  async submitJudgment(annotatorId: string, pairId: string, choice: Choice): Promise<void> {
    await this.request("/api/judgments", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator_id: annotatorId, pair_id: pairId, choice }),
    });
  }
}

async function errorText(response: Response): Promise<string> {
  try {
    const doc = (await response.json()) as { error?: string };
    return doc.error ?? `HTTP ${response.status}`;
  } catch {
    return `HTTP ${response.status}`;
  }
}
