// Browser bootstrap: hash routing between the four screens, DOM event
// delegation into the headless controllers, and the implicit-signal loop
// (IntersectionObserver for visibility, interval-based batching).

import { FeedloopClient } from "./api.js";
import { ConflictsController } from "./conflicts.js";
import { DashboardController } from "./dashboard.js";
import { FeedController } from "./feed.js";
import { RatingTaskController } from "./rating.js";
import { ImplicitTracker } from "./signals.js";
import type { FeedItem } from "./types.js";

const FLUSH_INTERVAL_MS = 5000;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function boot(): Promise<void> {
  const client = new FeedloopClient("", { userId: localStorage.getItem("feedloop.user") ?? "analyst" });
  const config = await client.config();
  const tracker = new ImplicitTracker(client, config.implicit_tracking);
  const feed = new FeedController(client, tracker);
  const conflicts = new ConflictsController(client);
  const rating = new RatingTaskController(client, localStorage);
  const dashboard = new DashboardController(client);
  const content = el("content");

  const itemFromNode = (node: HTMLElement): FeedItem | null => {
    const article = node.closest("article[data-id]") as HTMLElement | null;
    if (!article) return null;
    const channel = article.dataset.channel ?? "";
    const id = Number(article.dataset.id);
    return (
      feed.items.find((i) => i.message.channel_id === channel && i.message.message_id === id) ?? null
    );
  };

  const toast = (text: string): void => {
    const node = el("toast");
    node.textContent = text;
    node.classList.add("visible");
    setTimeout(() => node.classList.remove("visible"), 4000);
  };

  const renderFeed = (): void => {
    content.innerHTML = `
      <form id="search"><input name="q" placeholder="Search messages…" value="${feed.filters.query ?? ""}"/>
        <input name="channel" placeholder="channel" value="${feed.filters.channel ?? ""}"/>
        <button>Search</button></form>
      <div id="feed-items">${feed.render()}</div>
      <button id="load-more" ${feed.exhausted ? "disabled" : ""}>Load more</button>`;
    observeVisibility();
  };

  let observer: IntersectionObserver | null = null;
  const observeVisibility = (): void => {
    observer?.disconnect();
    if (!config.implicit_tracking) return;
    observer = new IntersectionObserver(
      (entries) => {
        for (const entry of entries) {
          const item = itemFromNode(entry.target as HTMLElement);
          if (!item) continue;
          if (entry.isIntersecting) tracker.onVisible(item);
          else {
            tracker.onHidden(item);
            if (entry.boundingClientRect.top < 0) tracker.onScrollPast(item);
          }
        }
      },
      { threshold: 0.5 },
    );
    for (const node of content.querySelectorAll("article[data-id]")) observer.observe(node);
  };

  content.addEventListener("click", async (event) => {
    const button = (event.target as HTMLElement).closest("button[data-action]") as HTMLElement | null;
    if (!button) return;
    const action = button.dataset.action ?? "";
    const route = location.hash.replace("#/", "") || "feed";
    if (route === "feed") {
      const item = itemFromNode(button);
      if (!item) return;
      const done =
        action === "agree"
          ? await feed.sendFeedback(item, "AGREE")
          : action === "disagree"
            ? await feed.sendFeedback(item, "DISAGREE")
            : action === "relabel-ct"
              ? await feed.sendFeedback(item, "RELABEL", "CT")
              : await feed.sendFeedback(item, "RELABEL", "NOT_CT");
      if (!done && feed.lastError) toast(feed.lastError);
      renderFeed();
    } else if (route === "conflicts") {
      const article = button.closest("article[data-conflict]") as HTMLElement | null;
      if (!article) return;
      const done = await conflicts.resolve(
        Number(article.dataset.conflict),
        action === "resolve-ct" ? "CT" : "NOT_CT",
      );
      if (!done && conflicts.lastError) toast(conflicts.lastError);
      content.querySelector("#conflict-list")!.innerHTML = conflicts.render();
    } else if (route === "rating") {
      const done =
        action === "agree"
          ? await rating.rate("AGREE")
          : action === "disagree"
            ? await rating.rate("DISAGREE")
            : action === "relabel-ct"
              ? await rating.rate("RELABEL", "CT")
              : await rating.rate("RELABEL", "NOT_CT");
      if (!done && rating.lastError) toast(rating.lastError);
      content.querySelector("#rating-body")!.innerHTML = rating.render();
    }
  });

  content.addEventListener("submit", async (event) => {
    const form = event.target as HTMLFormElement;
    event.preventDefault();
    if (form.id === "search") {
      const data = new FormData(form);
      await feed.reload({
        query: (data.get("q") as string) || undefined,
        channel: (data.get("channel") as string) || undefined,
      });
      renderFeed();
    } else if (form.id === "rating-start") {
      const data = new FormData(form);
      await rating.start(Number(data.get("n") ?? 10), Number(data.get("seed") ?? 0));
      content.querySelector("#rating-body")!.innerHTML = rating.render();
    }
  });

  const routes: Record<string, () => Promise<void>> = {
    feed: async () => {
      if (feed.items.length === 0) await feed.reload();
      renderFeed();
      content.querySelector("#load-more")?.addEventListener("click", async () => {
        await feed.loadNext();
        renderFeed();
      });
    },
    conflicts: async () => {
      await conflicts.load();
      content.innerHTML = `<div id="conflict-list">${conflicts.render()}</div>`;
    },
    rating: async () => {
      const resumed = await rating.resume().catch(() => false);
      content.innerHTML = `
        <form id="rating-start"><input name="n" type="number" value="10"/>
          <input name="seed" type="number" value="${Date.now() % 100000}"/>
          <button>Start rating task</button></form>
        <div id="rating-body">${resumed ? rating.render() : ""}</div>`;
    },
    dashboard: async () => {
      await dashboard.load();
      content.innerHTML = dashboard.render();
    },
  };

  const navigate = async (): Promise<void> => {
    const route = location.hash.replace("#/", "") || "feed";
    for (const link of document.querySelectorAll("nav a")) {
      link.classList.toggle("active", link.getAttribute("href") === `#/${route}`);
    }
    await (routes[route] ?? routes.feed)();
  };

  window.addEventListener("hashchange", navigate);
  if (config.implicit_tracking) {
    setInterval(() => void tracker.flush().catch(() => undefined), FLUSH_INTERVAL_MS);
    window.addEventListener("beforeunload", () => void tracker.flush().catch(() => undefined));
  }
  el("privacy-note").textContent = config.implicit_tracking
    ? "Implicit tracking is ON: impressions, clicks and dwell time are recorded pseudonymously to infer agreement."
    : "Implicit tracking is OFF: only explicit feedback leaves the browser.";
  await navigate();
}

void boot();
