/** Shapes of the service's JSON responses. The console renders these
 * verbatim; it never derives numbers of its own. */

export interface RetrievedFact {
  id: string;
  lang: string;
  question: string;
  answer: string;
  probability: number;
}

export interface QueryResponse {
  retrieved: RetrievedFact | null;
  mode: string;
  prompt: string;
  pre_edit_answer: string;
  answer: string;
  latency: {
    retrieval_ms: number;
    generation_ms: number;
  };
}

export interface FactEntry {
  id: string;
  lang: string;
  question: string;
  answer: string;
}

export interface MetricPair {
  em: number;
  f1: number;
}

export type Measure = 'em' | 'f1';

export const METRICS = ['reliability', 'generality', 'locality', 'portability'] as const;
export type MetricName = (typeof METRICS)[number];

export interface CaseRow {
  record_id: string;
  retrieved_ok: Record<string, boolean>;
  [metricField: string]: unknown;
}

export interface CaseFailure {
  record_id: string;
  stage: string;
  message: string;
}

export interface CellReport {
  edit_lang: string;
  test_lang: string;
  n_cases: number;
  n_failures: number;
  metrics: Record<string, MetricPair | null>;
  cases: CaseRow[];
  failures: CaseFailure[];
}

export interface EvalReport {
  config: Record<string, unknown>;
  cells: CellReport[];
  case_count: number;
  failure_count: number;
}

export interface EvalJobStatus {
  job_id: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  progress: { done: number; total: number };
  error: string | null;
}
