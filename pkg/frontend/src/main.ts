/** Browser bootstrap: wires screens to the #app root against the same-origin API. */

import { ApiError, BookForgeClient, BookStatus } from "./api.js";
import { ProgressPoller, ReviewSelection, screenForState, submitReview } from "./app.js";
import {
  renderCreateForm,
  renderErrorBanner,
  renderLibrary,
  renderProgress,
  renderReviewList,
} from "./views.js";

const client = new BookForgeClient("");
const root = document.getElementById("app")!;

function show(...nodes: HTMLElement[]): void {
  root.replaceChildren(...nodes);
}

async function showLibrary(): Promise<void> {
  try {
    const books = await client.listBooks();
    const panel = renderLibrary(client, books, (book) => void openBook(book));
    const fresh = renderCreateForm((title, body) => void createBook(title, body));
    show(fresh, panel);
  } catch (error) {
    showError(error, () => void showLibrary());
  }
}

async function createBook(title: string, body: string): Promise<void> {
  try {
    const status = await client.createBook(title, body, "und");
    await openBook(status);
  } catch (error) {
    showError(error, () => void createBook(title, body));
  }
}

async function openBook(status: BookStatus): Promise<void> {
  switch (screenForState(status.state)) {
    case "review":
      return openReview(status.book_id);
    case "library":
    case "failed":
      return showLibrary();
    case "progress": {
      const poller = new ProgressPoller(
        client,
        status.book_id,
        (update) => {
          if (screenForState(update.state) === "progress") {
            show(renderProgress(update));
          } else {
            void openBook(update);
          }
        },
        (error) => showError(error, () => poller.start()),
      );
      show(renderProgress(status));
      poller.start();
    }
  }
}

async function openReview(bookId: string): Promise<void> {
  try {
    const items = await client.getReviewItems(bookId);
    const pending = items.filter((item) => item.verdict === "suspicious");
    const selection = new ReviewSelection(pending);
    show(renderReviewList(client, pending, selection, () => void complete()));

    async function complete(): Promise<void> {
      await submitReview(client, bookId, selection);
      const status = await client.getBook(bookId);
      await openBook(status);
    }
  } catch (error) {
    showError(error, () => void openReview(bookId));
  }
}

function showError(error: unknown, retry: () => void): void {
  const message = error instanceof ApiError ? error.message : "Server unreachable.";
  show(renderErrorBanner(message, retry));
}

void showLibrary();
