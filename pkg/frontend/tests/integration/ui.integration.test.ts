// End-to-end: a real service process seeded with 50 classified messages, an
// open conflict, and a deployed model. The UI controllers run against it over
// HTTP, and assertions read the service's append-only log directly.

import { type ChildProcess, execFileSync, spawn } from "node:child_process";
import { copyFileSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { FeedloopClient } from "../../src/api.js";
import { ConflictsController } from "../../src/conflicts.js";
import { FeedController } from "../../src/feed.js";
import { ImplicitTracker } from "../../src/signals.js";

const REPO_ROOT = fileURLToPath(new URL("../../..", import.meta.url));
const PYTHON_ENV = { ...process.env, PYTHONPATH: join(REPO_ROOT, "src") };

const PORT_OFF = 18473; // privacy switch off
const PORT_ON = 18474; // privacy switch on

interface LogRecord {
  seq: number;
  kind: string;
  payload: Record<string, any>;
}

function readLog(path: string): LogRecord[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

async function waitHealthy(base: string, timeoutMs = 45_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service at ${base} never became healthy`);
}

function startService(configPath: string, port: number): ChildProcess {
  const child = spawn(
    "python3",
    ["-m", "feedloop", "--config", configPath, "serve", "--port", String(port)],
    { env: PYTHON_ENV, cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  child.stderr?.on("data", (chunk: Buffer) => {
    const text = chunk.toString();
    if (text.includes("Traceback")) console.error("service stderr:", text);
  });
  return child;
}

function countingFetch(counter: { implicit: number }) {
  return (input: string, init?: RequestInit) => {
    if (input.includes("/events/implicit")) counter.implicit += 1;
    return fetch(input, init);
  };
}

let workDir: string;
let logOff: string;
let logOn: string;
let serverOff: ChildProcess;
let serverOn: ChildProcess;
const baseOff = `http://127.0.0.1:${PORT_OFF}`;
const baseOn = `http://127.0.0.1:${PORT_ON}`;

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "feedloop-ui-"));
  logOff = join(workDir, "off.jsonl");
  logOn = join(workDir, "on.jsonl");

  // seed: deployed model, 50 classified feed messages, one open conflict
  execFileSync("python3", ["scripts/seed_demo.py", "--log", logOff, "--feed-size", "50"], {
    cwd: REPO_ROOT,
    env: PYTHON_ENV,
  });
  copyFileSync(logOff, logOn);

  const configOff = join(workDir, "off.json");
  writeFileSync(
    configOff,
    JSON.stringify({
      storage: { log_path: logOff },
      privacy: { implicit_tracking: false },
    }),
  );
  const configOn = join(workDir, "on.json");
  writeFileSync(
    configOn,
    JSON.stringify({
      storage: { log_path: logOn },
      privacy: { implicit_tracking: true },
    }),
  );

  serverOff = startService(configOff, PORT_OFF);
  serverOn = startService(configOn, PORT_ON);
  await waitHealthy(baseOff);
  await waitHealthy(baseOn);
}, 90_000);

afterAll(() => {
  serverOff?.kill();
  serverOn?.kill();
});

describe("feed against a seeded service", () => {
  it("renders labels and confidence for all 50 messages", async () => {
    const client = new FeedloopClient(baseOff, { userId: "it-analyst" });
    const feed = new FeedController(client, new ImplicitTracker(client, false), {
      pageSize: 50,
    });
    await feed.reload({ channel: "monitored" });
    expect(feed.items).toHaveLength(50);
    for (const item of feed.items) {
      expect(item.classification).not.toBeNull();
      expect(["CT", "NOT_CT"]).toContain(item.classification!.label);
      expect(item.classification!.confidence).toBeGreaterThanOrEqual(0.5);
      expect(item.classification!.confidence).toBeLessThanOrEqual(1);
    }
    const html = feed.render();
    expect(html).toMatch(/badge-(ct|not_ct)/);
    expect(html).toMatch(/\d+%/);
  });

  it("clicking Disagree logs exactly one explicit event with the displayed snapshot", async () => {
    const client = new FeedloopClient(baseOff, { userId: "it-disagreer" });
    const feed = new FeedController(client, new ImplicitTracker(client, false), {
      pageSize: 50,
    });
    await feed.reload({ channel: "monitored" });
    const item = feed.items.find((i) => i.message.message_id === 1005)!;
    const displayed = item.classification!;
    const before = readLog(logOff).length;

    expect(await feed.sendFeedback(item, "DISAGREE")).toBe(true);

    const added = readLog(logOff).slice(before);
    const feedbackRecords = added.filter((r) => r.kind === "FEEDBACK");
    expect(feedbackRecords).toHaveLength(1);
    const payload = feedbackRecords[0].payload;
    expect(payload.kind).toBe("DISAGREE");
    expect(payload.channel_id).toBe("monitored");
    expect(payload.message_id).toBe(1005);
    expect(payload.displayed.version_id).toBe(displayed.version_id);
    expect(payload.displayed.label).toBe(displayed.label);
    expect(payload.displayed.confidence).toBeCloseTo(displayed.confidence, 10);
    expect(payload.user_id).not.toBe("it-disagreer"); // pseudonymized
  });
});

describe("conflict resolution against a seeded service", () => {
  it("resolving the seeded conflict produces RESOLVED gold", async () => {
    const client = new FeedloopClient(baseOff, { userId: "it-resolver" });
    const controller = new ConflictsController(client);
    await controller.load();
    const seeded = controller.conflicts.find((c) => c.message_id === 1000);
    expect(seeded).toBeDefined();
    expect(new Set(Object.values(seeded!.positions))).toEqual(new Set(["CT", "NOT_CT"]));
    const before = readLog(logOff).length;

    expect(await controller.resolve(seeded!.conflict_id, "CT")).toBe(true);

    const added = readLog(logOff).slice(before);
    const resolve = added.find((r) => r.kind === "CONFLICT" && r.payload.action === "resolve");
    expect(resolve).toBeDefined();
    const gold = added.find((r) => r.kind === "GOLD" && r.payload.action === "add");
    expect(gold).toBeDefined();
    expect(gold!.payload.example.provenance).toMatch(/^RESOLVED:/);
    expect(gold!.payload.example.label).toBe("CT");
    expect(gold!.payload.example.message_id).toBe(1000);
    await controller.load();
    expect(controller.conflicts).toHaveLength(0);
  });
});

describe("privacy switch", () => {
  it("a scripted scroll emits zero implicit-event requests when tracking is off", async () => {
    const counter = { implicit: 0 };
    const client = new FeedloopClient(baseOff, {
      userId: "it-scroller",
      fetchFn: countingFetch(counter),
    });
    const config = await client.config();
    expect(config.implicit_tracking).toBe(false);
    const tracker = new ImplicitTracker(client, config.implicit_tracking);
    const feed = new FeedController(client, tracker, { pageSize: 25 });
    await feed.reload({ channel: "monitored" });
    for (const item of feed.items.slice(0, 10)) {
      tracker.onVisible(item);
      tracker.onHidden(item);
      tracker.onScrollPast(item);
    }
    await tracker.flush();
    expect(counter.implicit).toBe(0);
    const kinds = new Set(readLog(logOff).filter((r) => r.kind === "FEEDBACK").map((r) => r.payload.kind));
    expect(kinds.has("SCROLL_PAST")).toBe(false);
  });

  it("with tracking on, ten scroll-pasts arrive as one batched request", async () => {
    const counter = { implicit: 0 };
    const client = new FeedloopClient(baseOn, {
      userId: "it-scroller",
      fetchFn: countingFetch(counter),
    });
    const config = await client.config();
    expect(config.implicit_tracking).toBe(true);
    const tracker = new ImplicitTracker(client, config.implicit_tracking);
    const feed = new FeedController(client, tracker, { pageSize: 25 });
    await feed.reload({ channel: "monitored" });
    for (const item of feed.items.slice(0, 10)) tracker.onScrollPast(item);
    const recorded = await tracker.flush();
    expect(recorded).toBe(10);
    expect(counter.implicit).toBe(1);
    const scrolls = readLog(logOn).filter(
      (r) => r.kind === "FEEDBACK" && r.payload.kind === "SCROLL_PAST",
    );
    expect(scrolls).toHaveLength(10);
    expect(scrolls.every((r) => typeof r.payload.displayed.version_id === "string")).toBe(true);
  });
});
