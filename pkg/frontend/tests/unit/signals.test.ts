import { describe, expect, it } from "vitest";

import { FeedloopClient } from "../../src/api.js";
import { ImplicitTracker } from "../../src/signals.js";
import { FakeFetch, feedItem } from "../helpers.js";

function setup(enabled: boolean) {
  const fake = new FakeFetch().on("POST", "/events/implicit", (req) => ({
    body: { recorded: (req.body as { events: unknown[] }).events.length },
  }));
  const client = new FeedloopClient("http://svc", { fetchFn: fake.fn, userId: "viewer" });
  let now = 0;
  const tracker = new ImplicitTracker(client, enabled, () => now);
  return { fake, tracker, advance: (ms: number) => (now += ms) };
}

describe("impression threshold", () => {
  it("emits IMPRESSION only after one second of visibility", async () => {
    const { fake, tracker, advance } = setup(true);
    const quick = feedItem(1);
    const slow = feedItem(2);
    tracker.onVisible(quick);
    advance(400);
    tracker.onHidden(quick); // below threshold: nothing
    tracker.onVisible(slow);
    advance(1200);
    tracker.onHidden(slow);
    await tracker.flush();
    const sent = fake.sent("POST", "/events/implicit");
    expect(sent).toHaveLength(1);
    const events = (sent[0].body as { events: { kind: string; message_id: number }[] }).events;
    expect(events).toEqual([
      expect.objectContaining({ kind: "IMPRESSION", message_id: 2, displayed_version: "ft-0001" }),
    ]);
  });

  it("does not double-count impressions for the same item", async () => {
    const { fake, tracker, advance } = setup(true);
    const item = feedItem(1);
    for (let i = 0; i < 3; i++) {
      tracker.onVisible(item);
      advance(1500);
      tracker.onHidden(item);
    }
    await tracker.flush();
    const events = (fake.sent("POST", "/events/implicit")[0].body as { events: unknown[] }).events;
    expect(events).toHaveLength(1);
  });
});

describe("batching", () => {
  it("sends ten scroll-pasts as one request", async () => {
    const { fake, tracker } = setup(true);
    for (let i = 0; i < 10; i++) tracker.onScrollPast(feedItem(i));
    expect(tracker.pending()).toBe(10);
    const recorded = await tracker.flush();
    expect(recorded).toBe(10);
    expect(fake.sent("POST", "/events/implicit")).toHaveLength(1);
    const events = (fake.sent("POST", "/events/implicit")[0].body as { events: { kind: string }[] })
      .events;
    expect(events.every((e) => e.kind === "SCROLL_PAST")).toBe(true);
  });

  it("computes dwell seconds from open to close", async () => {
    const { fake, tracker, advance } = setup(true);
    const item = feedItem(5);
    tracker.onOpen(item);
    advance(12_000);
    tracker.onClose(item);
    await tracker.flush();
    const events = (
      fake.sent("POST", "/events/implicit")[0].body as {
        events: { kind: string; dwell_seconds?: number }[];
      }
    ).events;
    expect(events[0].kind).toBe("CLICK");
    expect(events[1].kind).toBe("DWELL");
    expect(events[1].dwell_seconds).toBeCloseTo(12);
  });

  it("requeues the batch when the flush fails", async () => {
    const fake = new FakeFetch().on("POST", "/events/implicit", () => ({
      status: 503,
      body: { error: "StorageFailure", detail: "disk full" },
    }));
    const client = new FeedloopClient("http://svc", { fetchFn: fake.fn });
    const tracker = new ImplicitTracker(client, true);
    tracker.onScrollPast(feedItem(1));
    await expect(tracker.flush()).rejects.toThrow("StorageFailure");
    expect(tracker.pending()).toBe(1);
  });
});

describe("privacy switch", () => {
  it("records nothing and never calls the network when disabled", async () => {
    const { fake, tracker, advance } = setup(false);
    for (let i = 0; i < 10; i++) {
      const item = feedItem(i);
      tracker.onVisible(item);
      advance(2000);
      tracker.onHidden(item);
      tracker.onScrollPast(item);
      tracker.onOpen(item);
      tracker.onClose(item);
    }
    expect(tracker.pending()).toBe(0);
    expect(await tracker.flush()).toBe(0);
    expect(fake.requests).toHaveLength(0);
  });
});
