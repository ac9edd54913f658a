// Typed client for the review service /v1 API. The UI computes nothing
// authoritative: every number shown on screen comes from these responses.

export interface ReviewItem {
  case_id: string;
  kind: 'entity' | 'relation' | 'sft_record';
  target_id: string;
  payload: Record<string, string>;
}

export interface ItemsPage {
  batch_id: string;
  total: number;
  next_cursor: number | null;
  items: ReviewItem[];
}

export interface BatchSummary {
  batch_id: string;
  case_ids: string[];
  items: number;
}

export type MissingFlagValue = { entity_kind: string; span: string };

export interface LabelBody {
  batch_id: string;
  case_id: string;
  kind: string;
  target_id: string;
  value: string | MissingFlagValue;
  reviewer: string;
}

export interface PostResult {
  ok: boolean;
  status: number;
  detail?: string;
}

export class ReviewApi {
  constructor(private baseUrl: string, private token?: string) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h['Content-Type'] = 'application/json';
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<{ ok: boolean; graphs: number }> {
    const resp = await fetch(this.url('/v1/healthz'));
    return (await resp.json()) as { ok: boolean; graphs: number };
  }

  async createBatch(nCases: number, seed: number, includeRecords = false): Promise<BatchSummary> {
    const resp = await fetch(this.url('/v1/batches'), {
      method: 'POST',
      headers: this.headers(true),
      body: JSON.stringify({ n_cases: nCases, seed, include_records: includeRecords }),
    });
    if (!resp.ok) throw new Error(`createBatch failed: ${resp.status}`);
    return (await resp.json()) as BatchSummary;
  }

  async listBatches(): Promise<Array<BatchSummary & { open: boolean }>> {
    const resp = await fetch(this.url('/v1/batches'), { headers: this.headers() });
    if (!resp.ok) throw new Error(`listBatches failed: ${resp.status}`);
    return (await resp.json()) as Array<BatchSummary & { open: boolean }>;
  }

  async getItems(batchId: string, cursor = 0, limit = 100): Promise<ItemsPage> {
    const resp = await fetch(
      this.url(`/v1/batches/${batchId}/items?cursor=${cursor}&limit=${limit}`),
      { headers: this.headers() },
    );
    if (!resp.ok) throw new Error(`getItems failed: ${resp.status}`);
    return (await resp.json()) as ItemsPage;
  }

  async allItems(batchId: string): Promise<ReviewItem[]> {
    const items: ReviewItem[] = [];
    let cursor: number | null = 0;
    while (cursor !== null) {
      const page: ItemsPage = await this.getItems(batchId, cursor);
      items.push(...page.items);
      cursor = page.next_cursor;
    }
    return items;
  }

  // Returns a result instead of throwing: the session re-queues failed labels.
  async postLabel(body: LabelBody): Promise<PostResult> {
    try {
      const resp = await fetch(this.url('/v1/labels'), {
        method: 'POST',
        headers: this.headers(true),
        body: JSON.stringify(body),
      });
      if (!resp.ok) {
        let detail = '';
        try {
          detail = JSON.stringify(await resp.json());
        } catch {
          detail = resp.statusText;
        }
        return { ok: false, status: resp.status, detail };
      }
      return { ok: true, status: resp.status };
    } catch (err) {
      console.error('postLabel network failure', err);
      return { ok: false, status: 0, detail: String(err) };
    }
  }

  async derive(batchId: string): Promise<{ changed: number }> {
    const resp = await fetch(this.url(`/v1/batches/${batchId}/derive`), {
      method: 'POST',
      headers: this.headers(),
    });
    if (!resp.ok) throw new Error(`derive failed: ${resp.status}`);
    return (await resp.json()) as { changed: number };
  }

  // Raw body text so the dashboard can be compared byte-for-byte with the API.
  async qualityRaw(batchId: string): Promise<string> {
    const resp = await fetch(this.url(`/v1/batches/${batchId}/quality`), {
      headers: this.headers(),
    });
    if (!resp.ok) throw new Error(`quality failed: ${resp.status}`);
    return await resp.text();
  }

  async recordQuality(batchId: string): Promise<Record<string, number>> {
    const resp = await fetch(this.url(`/v1/batches/${batchId}/record-quality`), {
      headers: this.headers(),
    });
    if (!resp.ok) throw new Error(`record-quality failed: ${resp.status}`);
    return (await resp.json()) as Record<string, number>;
  }
}
