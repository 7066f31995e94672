/** Typed client for the bookforge /v1 HTTP API. The UI never derives state
 *  itself: everything it shows comes from these calls. */

export interface BookStatus {
  book_id: string;
  title: string;
  language: string;
  state: string;
  content_id: string;
  word_count: number;
  model_count: number | null;
  created_at: number;
  error: string | null;
  bundle_sha256: string | null;
  eta_seconds: number | null;
  eta_provisional: boolean;
  step_timestamps: Record<string, number>;
}

export interface ReviewItem {
  asset_id: string;
  keyword: string;
  score: number;
  verdict: string;
  frontal_url: string;
}

export interface VerdictResult {
  asset_id: string;
  verdict: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = `HTTP ${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      code = body.error ?? code;
      detail = body.detail ?? JSON.stringify(body);
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, code, detail);
}

export class BookForgeClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  createBook(title: string, body: string, language = "und"): Promise<BookStatus> {
    return this.request<BookStatus>("/v1/books", {
      method: "POST",
      body: JSON.stringify({ title, body, language }),
    });
  }

  listBooks(): Promise<BookStatus[]> {
    return this.request<BookStatus[]>("/v1/books");
  }

  getBook(bookId: string): Promise<BookStatus> {
    return this.request<BookStatus>(`/v1/books/${bookId}`);
  }

  getReviewItems(bookId: string): Promise<ReviewItem[]> {
    return this.request<ReviewItem[]>(`/v1/books/${bookId}/review`);
  }

  postVerdict(bookId: string, assetId: string, verdict: "keep" | "remove"): Promise<VerdictResult> {
    return this.request<VerdictResult>(`/v1/books/${bookId}/review/${assetId}/verdict`, {
      method: "POST",
      body: JSON.stringify({ verdict }),
    });
  }

  completeReview(bookId: string): Promise<{ book_id: string; state: string }> {
    return this.request(`/v1/books/${bookId}/review/complete`, { method: "POST" });
  }

  bundleUrl(bookId: string): string {
    return `${this.baseUrl}/v1/books/${bookId}/bundle`;
  }

  frontalUrl(item: ReviewItem): string {
    return this.baseUrl + item.frontal_url;
  }

  async downloadBundle(bookId: string): Promise<{ bytes: ArrayBuffer; sha256: string | null }> {
    const response = await fetch(this.bundleUrl(bookId));
    if (!response.ok) {
      throw await parseError(response);
    }
    return {
      bytes: await response.arrayBuffer(),
      sha256: response.headers.get("X-Content-SHA256"),
    };
  }
}
