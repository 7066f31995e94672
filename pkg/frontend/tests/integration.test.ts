/** Round-trip against a real pipeline server with mock providers:
 *  create -> progress -> review (keep one, complete) -> download. */

import { createHash } from "node:crypto";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { BookForgeClient } from "../src/api.js";
import { ReviewSelection, screenForState, submitReview } from "../src/app.js";
import { ALL_PLAUSIBLE_SCORES, STORY_BODY, STORY_TITLE, SUSPICIOUS_SCORES } from "./fixtures.js";
import { RunningServer, startServer, waitForState } from "./server.js";

let server: RunningServer;
let client: BookForgeClient;

beforeAll(async () => {
  server = await startServer(SUSPICIOUS_SCORES);
  client = new BookForgeClient(server.baseUrl);
});

afterAll(async () => {
  await server?.stop();
});

describe("review console round trip", () => {
  it("walks create -> progress -> review -> download, verified server-side", async () => {
    const created = await client.createBook(STORY_TITLE, STORY_BODY, "en");
    expect(created.book_id).toMatch(/^bk_/);
    expect(created.eta_seconds).not.toBeNull();

    const state = await waitForState(server.baseUrl, created.book_id, ["awaiting_review", "failed"]);
    expect(state).toBe("awaiting_review");
    expect(screenForState(state)).toBe("review");

    const items = await client.getReviewItems(created.book_id);
    expect(items).toHaveLength(1);
    expect(items[0].keyword).toBe("garden path");
    expect(items[0].verdict).toBe("suspicious");

    // the frontal image the review screen shows must resolve
    const frontal = await fetch(client.frontalUrl(items[0]));
    expect(frontal.status).toBe(200);
    expect(frontal.headers.get("content-type")).toBe("image/png");

    // keep the one suspicious model, then complete
    const selection = new ReviewSelection(items);
    selection.toggle(items[0].asset_id);
    await submitReview(client, created.book_id, selection);

    await waitForState(server.baseUrl, created.book_id, ["ready", "failed"]);
    const finalStatus = await client.getBook(created.book_id);
    expect(finalStatus.state).toBe("ready");

    // server-side verdict check: the kept asset is recorded as kept
    const reviewed = await client.getReviewItems(created.book_id);
    expect(reviewed.map((item) => item.verdict)).toEqual(["kept"]);

    const bundle = await client.downloadBundle(created.book_id);
    expect(bundle.sha256).not.toBeNull();
    const digest = createHash("sha256").update(new Uint8Array(bundle.bytes)).digest("hex");
    expect(digest).toBe(bundle.sha256);
  });

  it("defaults undecided suspicious models to removed on complete", async () => {
    const created = await client.createBook(`${STORY_TITLE} again`, STORY_BODY, "en");
    await waitForState(server.baseUrl, created.book_id, ["awaiting_review"]);
    const items = await client.getReviewItems(created.book_id);
    await submitReview(client, created.book_id, new ReviewSelection(items)); // keep nothing
    await waitForState(server.baseUrl, created.book_id, ["ready"]);
    const reviewed = await client.getReviewItems(created.book_id);
    expect(reviewed.map((item) => item.verdict)).toEqual(["removed"]);
  });

  it("library lists the books newest first with download for ready ones", async () => {
    const books = await client.listBooks();
    expect(books.length).toBeGreaterThanOrEqual(2);
    const states = new Set(books.map((book) => book.state));
    expect(states.has("ready")).toBe(true);
    const ready = books.find((book) => book.state === "ready")!;
    const head = await fetch(client.bundleUrl(ready.book_id));
    expect(head.status).toBe(200);
  });
});

describe("zero-suspicious books", () => {
  it("go straight to ready; the UI never routes them to review", async () => {
    const plausible = await startServer(ALL_PLAUSIBLE_SCORES);
    try {
      const localClient = new BookForgeClient(plausible.baseUrl);
      const created = await localClient.createBook(STORY_TITLE, STORY_BODY, "en");
      const state = await waitForState(plausible.baseUrl, created.book_id,
        ["awaiting_review", "ready", "failed"]);
      expect(state).toBe("ready");
      expect(screenForState(state)).toBe("library");
      const status = await localClient.getBook(created.book_id);
      expect(status.step_timestamps["awaiting_review"]).toBeUndefined();
      // there was never anything to review
      const reviewed = await localClient.getReviewItems(created.book_id);
      expect(reviewed).toEqual([]);
    } finally {
      await plausible.stop();
    }
  });
});
