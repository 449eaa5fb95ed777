// Test doubles: a recording fetch stub routed by method+path prefix, plus
// small fixture builders.

import type { Classification, Conflict, FeedItem, Message } from "../src/types.js";

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

type Responder = (req: RecordedRequest) => { status?: number; body: unknown };

export class FakeFetch {
  requests: RecordedRequest[] = [];
  private routes: { method: string; prefix: string; responder: Responder }[] = [];

  on(method: string, prefix: string, responder: Responder): this {
    this.routes.push({ method, prefix, responder });
    return this;
  }

  fn = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const request: RecordedRequest = {
      url: input,
      method,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    };
    this.requests.push(request);
    const path = input.replace(/^https?:\/\/[^/]+/, "");
    for (const route of this.routes) {
      if (route.method === method && path.startsWith(route.prefix)) {
        const { status = 200, body } = route.responder(request);
        return new Response(JSON.stringify(body), {
          status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    return new Response(JSON.stringify({ error: "NoRoute", detail: path }), { status: 500 });
  };

  sent(method: string, prefix: string): RecordedRequest[] {
    return this.requests.filter(
      (r) => r.method === method && r.url.replace(/^https?:\/\/[^/]+/, "").startsWith(prefix),
    );
  }
}

export function message(id: number, text = `message ${id}`, channel = "chan"): Message {
  return {
    channel_id: channel,
    message_id: id,
    posted_at: 1_700_000_000 + id,
    text,
    media_flag: false,
    ingest_seq: id,
  };
}

export function classification(
  id: number,
  label: "CT" | "NOT_CT" = "CT",
  confidence = 0.92,
  version = "ft-0001",
): Classification {
  return {
    channel_id: "chan",
    message_id: id,
    label,
    confidence,
    pathway: "FT",
    version_id: version,
    classified_at: 1_700_000_100,
  };
}

export function feedItem(id: number, label: "CT" | "NOT_CT" = "CT"): FeedItem {
  return {
    message: message(id),
    classification: classification(id, label),
    in_review_queue: false,
    mine: null,
  };
}

export function conflict(id: number, text = "disputed message"): Conflict {
  return {
    conflict_id: id,
    channel_id: "chan",
    message_id: 100 + id,
    positions: { "user-a-hash": "CT", "user-b-hash": "NOT_CT" },
    status: "OPEN",
    text,
  };
}
