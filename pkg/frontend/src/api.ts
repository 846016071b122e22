import type { BboxArray, ImrDoc, SearchResponse } from "./types.js";

/** A non-2xx reply; `body` keeps the raw response text for verbatim display. */
export class ApiError extends Error {
  constructor(readonly status: number, readonly body: string) {
    super(`HTTP ${status}`);
    this.name = "ApiError";
  }
}

export interface SearchRequest {
  sentence: string;
  bbox?: BboxArray;
  limit?: number;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  async search(req: SearchRequest): Promise<SearchResponse> {
    return this.post("/api/search", req);
  }

  async translate(sentence: string): Promise<{ imr: ImrDoc }> {
    return this.post("/api/translate", { sentence });
  }

  async areas(prefix: string): Promise<string[]> {
    const url = `${this.baseUrl}/api/areas?q=${encodeURIComponent(prefix)}`;
    const body = await this.check(await fetch(url));
    return (JSON.parse(body) as { areas: string[] }).areas;
  }

  async health(): Promise<{ status: string; features: number }> {
    const body = await this.check(await fetch(`${this.baseUrl}/api/health`));
    return JSON.parse(body);
  }

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return JSON.parse(await this.check(resp)) as T;
  }

  private async check(resp: Response): Promise<string> {
    const text = await resp.text();
    if (!resp.ok) throw new ApiError(resp.status, text);
    return text;
  }
}
