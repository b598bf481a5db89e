import type { EvalJobStatus, EvalReport, FactEntry, QueryResponse } from './types';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = `${response.status} ${response.statusText}`;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(response.status, detail);
}

export interface ApiClient {
  languages(): Promise<string[]>;
  listFacts(lang?: string): Promise<FactEntry[]>;
  addFact(fact: { lang: string; question: string; answer: string }): Promise<{
    id: string;
    replaced: boolean;
    version: number;
  }>;
  deleteFact(id: string): Promise<void>;
  query(payload: {
    text: string;
    test_lang: string;
    mode?: string;
    shots?: number;
  }): Promise<QueryResponse>;
  startEval(payload: Record<string, unknown>): Promise<string>;
  evalStatus(jobId: string): Promise<EvalJobStatus>;
  report(jobId: string): Promise<EvalReport>;
  reportCsvUrl(jobId: string): string;
}

export function createApi(fetchFn: typeof fetch = fetch, base = ''): ApiClient {
  const post = (path: string, payload: unknown) =>
    fetchFn(`${base}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });

  return {
    async languages() {
      const body = await parseOrThrow<{ languages: string[] }>(
        await fetchFn(`${base}/api/languages`),
      );
      return body.languages;
    },
    async listFacts(lang) {
      const suffix = lang ? `?lang=${encodeURIComponent(lang)}` : '';
      const body = await parseOrThrow<{ facts: FactEntry[] }>(
        await fetchFn(`${base}/api/facts${suffix}`),
      );
      return body.facts;
    },
    async addFact(fact) {
      return parseOrThrow(await post('/api/facts', fact));
    },
    async deleteFact(id) {
      await parseOrThrow(
        await fetchFn(`${base}/api/facts/${encodeURIComponent(id)}`, { method: 'DELETE' }),
      );
    },
    async query(payload) {
      return parseOrThrow<QueryResponse>(await post('/api/query', payload));
    },
    async startEval(payload) {
      const body = await parseOrThrow<{ job_id: string }>(await post('/api/eval', payload));
      return body.job_id;
    },
    async evalStatus(jobId) {
      return parseOrThrow<EvalJobStatus>(
        await fetchFn(`${base}/api/eval/${encodeURIComponent(jobId)}`),
      );
    },
    async report(jobId) {
      return parseOrThrow<EvalReport>(
        await fetchFn(`${base}/api/reports/${encodeURIComponent(jobId)}?include_timing=false`),
      );
    },
    reportCsvUrl(jobId) {
      return `${base}/api/reports/${encodeURIComponent(jobId)}.csv`;
    },
  };
}

/** Keys in-flight requests so a slow response never overwrites a newer one. */
export class LatestGate {
  private current = 0;

  next(): number {
    this.current += 1;
    return this.current;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.current;
  }
}
