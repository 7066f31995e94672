/** Screen selection, progress polling, and review-verdict bookkeeping.
 *  Pure logic, no DOM: views.ts renders whatever these decide. */

import { BookForgeClient, BookStatus, ReviewItem } from "./api.js";

export type Screen = "progress" | "review" | "library" | "failed";

export const TERMINAL_STATES = ["ready", "failed"];

/** Which screen a book's server-reported state maps to. Zero-suspicious books
 *  go ready without ever passing awaiting_review, so they never see review. */
export function screenForState(state: string): Screen {
  if (state === "awaiting_review") return "review";
  if (state === "ready") return "library";
  if (state === "failed") return "failed";
  return "progress";
}

export function formatEta(status: BookStatus): string {
  if (status.eta_seconds == null) return "";
  const flag = status.eta_provisional ? " (provisional)" : "";
  return `approximately ${status.eta_seconds} seconds${flag}`;
}

export function formatCountdown(status: BookStatus, elapsedSeconds: number): string {
  if (status.eta_seconds == null) return "";
  const remaining = Math.max(0, Math.round(status.eta_seconds - elapsedSeconds));
  return `about ${remaining}s remaining`;
}

/** Polls a book's status at a fixed cadence (<= 2 s) until a terminal state. */
export class ProgressPoller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly client: BookForgeClient,
    private readonly bookId: string,
    private readonly onUpdate: (status: BookStatus) => void,
    private readonly onError: (error: unknown) => void,
    readonly intervalMs: number = 1500,
  ) {
    if (intervalMs > 2000) {
      throw new Error("polling cadence must stay at or below 2s while building");
    }
  }

  start(): void {
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  async tick(): Promise<BookStatus | null> {
    if (this.stopped) return null;
    let status: BookStatus;
    try {
      status = await this.client.getBook(this.bookId);
    } catch (error) {
      this.onError(error);
      return null;
    }
    this.onUpdate(status);
    if (TERMINAL_STATES.includes(status.state) || status.state === "awaiting_review") {
      this.stop();
    } else if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.intervalMs);
    }
    return status;
  }
}

/** Keep/remove selection for the review screen; remove is the default, so
 *  only explicit keeps are posted and completion removes the rest. */
export class ReviewSelection {
  private readonly keeps = new Set<string>();

  constructor(readonly items: ReviewItem[]) {}

  isKept(assetId: string): boolean {
    return this.keeps.has(assetId);
  }

  toggle(assetId: string): boolean {
    if (this.keeps.has(assetId)) {
      this.keeps.delete(assetId);
    } else {
      this.keeps.add(assetId);
    }
    return this.keeps.has(assetId);
  }

  keptAssetIds(): string[] {
    return this.items
      .filter((item) => this.keeps.has(item.asset_id))
      .map((item) => item.asset_id);
  }
}

/** Post every explicit keep, then complete the review. */
export async function submitReview(
  client: BookForgeClient,
  bookId: string,
  selection: ReviewSelection,
): Promise<void> {
  for (const assetId of selection.keptAssetIds()) {
    await client.postVerdict(bookId, assetId, "keep");
  }
  await client.completeReview(bookId);
}
