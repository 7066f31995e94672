// @vitest-environment jsdom
import { describe, expect, it, vi } from "vitest";

import { BookForgeClient, BookStatus, ReviewItem } from "../src/api.js";
import { ReviewSelection } from "../src/app.js";
import { renderCreateForm, renderLibrary, renderProgress, renderReviewList } from "../src/views.js";

const client = new BookForgeClient("");

function status(overrides: Partial<BookStatus>): BookStatus {
  return {
    book_id: "bk_1",
    title: "Goldilocks",
    language: "en",
    state: "generating",
    content_id: "st_x",
    word_count: 100,
    model_count: 9,
    created_at: 0,
    error: null,
    bundle_sha256: null,
    eta_seconds: 140,
    eta_provisional: false,
    step_timestamps: {},
    ...overrides,
  };
}

function reviewItem(assetId: string, keyword: string): ReviewItem {
  return {
    asset_id: assetId,
    keyword,
    score: 0.42,
    verdict: "suspicious",
    frontal_url: `/v1/books/bk_1/assets/${assetId}/frontal`,
  };
}

describe("create form", () => {
  it("validates empty text inline and sends nothing", () => {
    const onSubmit = vi.fn();
    const form = renderCreateForm(onSubmit);
    document.body.append(form);
    (form.querySelector("input[name=title]") as HTMLInputElement).value = "T";
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    expect(onSubmit).not.toHaveBeenCalled();
    const error = form.querySelector(".inline-error") as HTMLElement;
    expect(error.hidden).toBe(false);
  });

  it("submits trimmed values", () => {
    const onSubmit = vi.fn();
    const form = renderCreateForm(onSubmit);
    document.body.append(form);
    (form.querySelector("input[name=title]") as HTMLInputElement).value = " My Tale ";
    (form.querySelector("textarea[name=body]") as HTMLTextAreaElement).value = "Once upon...";
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    expect(onSubmit).toHaveBeenCalledWith("My Tale", "Once upon...");
  });
});

describe("progress panel", () => {
  it("shows the waiting-time estimate", () => {
    const panel = renderProgress(status({ eta_seconds: 140 }));
    expect(panel.querySelector(".eta")?.textContent).toBe("approximately 140 seconds");
  });
});

describe("review list", () => {
  it("renders one row per suspicious model with remove as the default", () => {
    const items = [reviewItem("a_1", "garden path"), reviewItem("a_2", "tuba")];
    const selection = new ReviewSelection(items);
    const panel = renderReviewList(client, items, selection, () => {});
    const toggles = panel.querySelectorAll<HTMLInputElement>("input[type=checkbox]");
    expect(toggles).toHaveLength(2);
    toggles.forEach((toggle) => expect(toggle.checked).toBe(false));
    const image = panel.querySelector("img.frontal") as HTMLImageElement;
    expect(image.src).toContain("/v1/books/bk_1/assets/a_1/frontal");
  });

  it("checkbox changes flow into the selection", () => {
    const items = [reviewItem("a_1", "garden path")];
    const selection = new ReviewSelection(items);
    const panel = renderReviewList(client, items, selection, () => {});
    const toggle = panel.querySelector("input[type=checkbox]") as HTMLInputElement;
    toggle.checked = true;
    toggle.dispatchEvent(new Event("change"));
    expect(selection.keptAssetIds()).toEqual(["a_1"]);
  });

  it("complete button fires the callback", () => {
    const onComplete = vi.fn();
    const panel = renderReviewList(client, [], new ReviewSelection([]), onComplete);
    (panel.querySelector("button") as HTMLButtonElement).click();
    expect(onComplete).toHaveBeenCalled();
  });
});

describe("library", () => {
  it("shows an empty-state message without books", () => {
    const panel = renderLibrary(client, [], () => {});
    expect(panel.querySelector(".empty")?.textContent).toContain("No books yet");
  });

  it("links downloads only for ready books and surfaces failures", () => {
    const books = [
      status({ book_id: "bk_r", state: "ready", title: "Done" }),
      status({ book_id: "bk_f", state: "failed", title: "Broken", error: "EmptyBook: nothing" }),
      status({ book_id: "bk_g", state: "generating", title: "Cooking" }),
    ];
    const panel = renderLibrary(client, books, () => {});
    const downloads = panel.querySelectorAll("a.download");
    expect(downloads).toHaveLength(1);
    expect((downloads[0] as HTMLAnchorElement).href).toContain("/v1/books/bk_r/bundle");
    expect(panel.querySelector(".diagnostic")?.textContent).toContain("EmptyBook");
  });
});
