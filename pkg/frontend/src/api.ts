// Typed client for the monitoring service. The UI talks to the documented
// HTTP API exclusively; no other storage access exists.

import type {
  Conflict,
  FeedbackRequest,
  FeedPage,
  ImplicitEvent,
  Metrics,
  PublicConfig,
  RatingItem,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly errorName: string,
    public readonly detail: string,
    public readonly status: number,
  ) {
    super(`${errorName}: ${detail}`);
  }
}

export interface FeedParams {
  query?: string;
  channel?: string;
  from?: number;
  to?: number;
  page?: number;
  page_size?: number;
  user_id?: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class FeedloopClient {
  private readonly fetchFn: FetchLike;

  constructor(
    public readonly baseUrl: string,
    opts: { fetchFn?: FetchLike; token?: string; userId?: string } = {},
  ) {
    this.fetchFn = opts.fetchFn ?? ((input, init) => fetch(input, init));
    this.token = opts.token;
    this.userId = opts.userId ?? "analyst";
  }

  token?: string;
  userId: string;

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        (body as { error?: string }).error ?? "HttpError",
        (body as { detail?: string }).detail ?? response.statusText,
        response.status,
      );
    }
    return body as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>(path, { headers: this.headers(false) });
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(body),
    });
  }

  config(): Promise<PublicConfig> {
    return this.get("/config");
  }

  feed(params: FeedParams = {}): Promise<FeedPage> {
    const search = new URLSearchParams();
    if (params.query) search.set("query", params.query);
    if (params.channel) search.set("channel", params.channel);
    if (params.from !== undefined) search.set("from", String(params.from));
    if (params.to !== undefined) search.set("to", String(params.to));
    if (params.page !== undefined) search.set("page", String(params.page));
    if (params.page_size !== undefined) search.set("page_size", String(params.page_size));
    search.set("user_id", params.user_id ?? this.userId);
    return this.get(`/feed?${search.toString()}`);
  }

  sendFeedback(req: FeedbackRequest): Promise<{ event_id: number }> {
    return this.post("/feedback", req);
  }

  sendImplicitBatch(events: ImplicitEvent[]): Promise<{ recorded: number }> {
    return this.post("/events/implicit", { events });
  }

  conflicts(): Promise<Conflict[]> {
    return this.get("/conflicts");
  }

  resolveConflict(
    conflictId: number,
    label: string,
    resolverId: string,
  ): Promise<{ conflict_id: number; gold: Record<string, unknown> }> {
    return this.post(`/conflicts/${conflictId}/resolve`, {
      label,
      resolver_id: resolverId,
    });
  }

  reviewQueue(): Promise<unknown[]> {
    return this.get("/review-queue");
  }

  ratingTask(n: number, seed: number, from?: number, to?: number): Promise<RatingItem[]> {
    return this.post("/rating-task", { n, seed, from: from ?? null, to: to ?? null });
  }

  metrics(): Promise<Metrics> {
    return this.get("/metrics");
  }
}
