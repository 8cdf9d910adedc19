// Typed client over the review-service HTTP API. Every mutation in the UI
// goes through this module, so nothing can bypass the event log.

import type {
  Decision,
  GradeExport,
  ItemKind,
  ItemPage,
  ItemStatus,
  ReviewItem,
  SessionConfig,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Another reviewer got there first (HTTP 409). */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export class NotFoundError extends ApiError {
  constructor(message: string) {
    super(404, message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly config: SessionConfig,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.config.baseUrl.replace(/\/+$/, "") + path;
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.config.token) {
      headers["X-Reviewer-Token"] = this.config.token;
    }
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.url(path), {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    if (!response.ok) {
      const body = await response.text();
      if (response.status === 409) throw new ConflictError(body);
      if (response.status === 404) throw new NotFoundError(body);
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  listItems(params: {
    kind?: ItemKind;
    status?: ItemStatus;
    page?: number;
    pageSize?: number;
  }): Promise<ItemPage> {
    const query = new URLSearchParams();
    if (params.kind) query.set("kind", params.kind);
    if (params.status) query.set("status", params.status);
    if (params.page) query.set("page", String(params.page));
    if (params.pageSize) query.set("page_size", String(params.pageSize));
    return this.request<ItemPage>(`/api/items?${query.toString()}`);
  }

  getItem(itemId: string): Promise<ReviewItem> {
    return this.request<ReviewItem>(`/api/items/${encodeURIComponent(itemId)}`);
  }

  submitVerification(
    itemId: string,
    body: { decision: Decision; reason?: string },
  ): Promise<ReviewItem> {
    return this.request<ReviewItem>(
      `/api/items/${encodeURIComponent(itemId)}/verification`,
      {
        method: "POST",
        body: JSON.stringify({ ...body, reviewer_id: this.config.reviewerId }),
      },
    );
  }

  submitGrade(
    itemId: string,
    body: { correctness: number; completeness: number; comment?: string },
  ): Promise<ReviewItem> {
    return this.request<ReviewItem>(
      `/api/items/${encodeURIComponent(itemId)}/grade`,
      {
        method: "POST",
        body: JSON.stringify({ ...body, reviewer_id: this.config.reviewerId }),
      },
    );
  }

  exportGrades(): Promise<GradeExport> {
    return this.request<GradeExport>("/api/export/grades");
  }

  enqueue(items: Array<Record<string, unknown>>): Promise<{ enqueued: number }> {
    return this.request<{ enqueued: number }>("/api/items", {
      method: "POST",
      body: JSON.stringify({ items }),
    });
  }

  health(): Promise<{ status: string }> {
    return this.request<{ status: string }>("/api/health");
  }
}
