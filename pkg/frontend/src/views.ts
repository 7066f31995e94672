/** DOM builders for each screen. Mobile-first, framework-free. */

import { BookForgeClient, BookStatus, ReviewItem } from "./api.js";
import { ReviewSelection, formatEta } from "./app.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderCreateForm(
  onSubmit: (title: string, body: string) => void,
): HTMLElement {
  const form = el("form", "create-form");
  const title = el("input");
  title.placeholder = "Story title";
  title.name = "title";
  title.required = true;
  const body = el("textarea");
  body.placeholder = "Paste the story text here";
  body.name = "body";
  body.rows = 10;
  const error = el("p", "inline-error");
  error.hidden = true;
  const submit = el("button", "primary", "Create 3D book");
  submit.type = "submit";
  form.append(title, body, error, submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!body.value.trim()) {
      error.textContent = "The story text is empty.";
      error.hidden = false;
      return; // invalid input never reaches the server
    }
    error.hidden = true;
    onSubmit(title.value.trim() || "Untitled", body.value);
  });
  return form;
}

export function renderProgress(status: BookStatus): HTMLElement {
  const panel = el("section", "progress-panel");
  panel.append(el("h2", undefined, status.title));
  panel.append(el("p", "state", `Building: ${status.state.replace("_", " ")}`));
  const eta = formatEta(status);
  if (eta) {
    const line = el("p", "eta", eta);
    line.dataset.etaSeconds = String(status.eta_seconds);
    panel.append(line);
  }
  if (status.model_count != null) {
    panel.append(el("p", "models", `${status.model_count} models`));
  }
  return panel;
}

export function renderReviewList(
  client: BookForgeClient,
  items: ReviewItem[],
  selection: ReviewSelection,
  onComplete: () => void,
): HTMLElement {
  const panel = el("section", "review-panel");
  panel.append(el("h2", undefined, "Review suspicious models"));
  const list = el("ul", "review-items");
  for (const item of items) {
    const row = el("li", "review-item");
    const image = el("img", "frontal");
    image.src = client.frontalUrl(item);
    image.alt = `frontal view of ${item.keyword}`;
    const label = el("label");
    const toggle = el("input");
    toggle.type = "checkbox";
    toggle.checked = selection.isKept(item.asset_id); // default: remove
    toggle.dataset.assetId = item.asset_id;
    toggle.addEventListener("change", () => selection.toggle(item.asset_id));
    label.append(toggle, el("span", "keyword", ` keep "${item.keyword}"`));
    row.append(image, label, el("span", "score", `score ${item.score.toFixed(2)}`));
    list.append(row);
  }
  const complete = el("button", "primary", "Complete");
  complete.addEventListener("click", onComplete);
  panel.append(list, complete);
  return panel;
}

export function renderLibrary(
  client: BookForgeClient,
  books: BookStatus[],
  onOpen: (book: BookStatus) => void,
): HTMLElement {
  const panel = el("section", "library-panel");
  panel.append(el("h2", undefined, "Your 3D books"));
  if (books.length === 0) {
    panel.append(el("p", "empty", "No books yet. Create one to get started."));
    return panel;
  }
  const list = el("ul", "book-list");
  for (const book of books) {
    const row = el("li", `book book-${book.state}`);
    const open = el("a", "title", book.title);
    open.href = "#";
    open.addEventListener("click", (event) => {
      event.preventDefault();
      onOpen(book);
    });
    row.append(open, el("span", "state", book.state));
    if (book.state === "ready") {
      const download = el("a", "download", "download");
      download.href = client.bundleUrl(book.book_id);
      download.setAttribute("download", `${book.title}.zip`);
      row.append(download);
    }
    if (book.state === "failed" && book.error) {
      row.append(el("p", "diagnostic", book.error));
    }
    list.append(row);
  }
  panel.append(list);
  return panel;
}

export function renderErrorBanner(message: string, onRetry: () => void): HTMLElement {
  const banner = el("div", "error-banner");
  banner.append(el("span", undefined, message));
  const retry = el("button", undefined, "Retry");
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  return banner;
}
