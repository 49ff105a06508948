import { Choice, NextResponse, RankResponse, StatsResponse } from "./types.js";

/** Minimal response surface so tests can stub the transport. */
export interface TransportResponse {
  status: number;
  text(): Promise<string>;
}

export type Transport = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<TransportResponse>;

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/** Raised when the transport itself failed (offline, refused). */
export class NetworkError extends Error {}

export class DuplicateSubmission extends ServiceError {}

export class StudyApi {
  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly transport: Transport = (url, init) => fetch(url, init)
  ) {}

  private async request(path: string, init?: Parameters<Transport>[1]): Promise<string> {
    let response: TransportResponse;
    try {
      response = await this.transport(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    const body = await response.text();
    if (response.status === 409) {
      throw new DuplicateSubmission(body, 409);
    }
    if (response.status !== 200) {
      throw new ServiceError(`${response.status}: ${body}`, response.status);
    }
    return body;
  }

  async next(): Promise<NextResponse> {
    const body = await this.request(`/session/${this.sessionId}/next`);
    return JSON.parse(body) as NextResponse;
  }

  async rank(taskId: string, choice: Choice): Promise<RankResponse> {
    const body = await this.request(`/session/${this.sessionId}/rank`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, choice }),
    });
    return JSON.parse(body) as RankResponse;
  }

  async stats(): Promise<StatsResponse> {
    const body = await this.request(`/session/${this.sessionId}/stats`);
    return JSON.parse(body) as StatsResponse;
  }

  async rubric(): Promise<string> {
    return this.request("/rubric");
  }
}
