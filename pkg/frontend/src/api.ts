/**
 * Typed client for the labelforge HTTP API. All UI data flows through here;
 * the UI never recomputes statistics the server already serves.
 */

export interface LabelDef {
  id: string;
  name: string;
  description: string;
}

export interface ServedAssignment {
  assignment: { id: string; record_id: string; lease_expires_at: number } | null;
  record?: { id: string; text: string };
  labels?: LabelDef[];
  codebook_url?: string | null;
}

export interface HistoryItem {
  annotation_id: string;
  record_id: string;
  text: string;
  label_id: string;
  label_name: string;
  elapsed_ms: number;
  source: string;
  created_at: number;
}

export interface ProjectSummary {
  id: string;
  name: string;
  description: string;
  labels: LabelDef[];
  settings: Record<string, unknown>;
  status_counts: Record<string, number>;
  batches: { index: number; selection_method: string; status: string; size: number }[];
  has_codebook: boolean;
  snapshot_count: number;
}

export interface LabelCounts {
  coder_id: string;
  username: string;
  counts: Record<string, number>;
}

export interface TimingRow {
  coder_id: string;
  username: string;
  minimum: number;
  q1: number;
  median: number;
  q3: number;
  maximum: number;
  outliers: number[];
}

export interface ModelPoint {
  batch_index: number;
  accuracy: number;
  macro_precision: number;
  macro_recall: number;
  macro_f1: number;
  trained_at: number;
}

export interface IrrPayload {
  enabled: boolean;
  statistic?: string | null;
  kappa?: number | null;
  percent_overall?: number | null;
  double_coded_items?: number;
  pairwise?: { coder_a: string; coder_b: string; agreement: number; items: number }[];
  matrix?: { labels: string[]; counts: number[][] };
}

export interface QueueRecord {
  record_id: string;
  text: string;
  votes: { coder_id: string; username: string; label_id: string; label_name: string; source: string }[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: string[] = [],
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private token: string,
    private base = '/api/v1',
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { Authorization: `Bearer ${this.token}` } };
    if (body !== undefined) {
      if (body instanceof FormData) {
        init.body = body;
      } else {
        (init.headers as Record<string, string>)['Content-Type'] = 'application/json';
        init.body = JSON.stringify(body);
      }
    }
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) {
      let code = 'error';
      let message = `${response.status}`;
      let details: string[] = [];
      try {
        const payload = await response.json();
        code = payload.code ?? code;
        message = payload.message ?? message;
        details = payload.details ?? [];
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, code, message, details);
    }
    return (await response.json()) as T;
  }

  me() {
    return this.request<{ id: string; username: string; role: string }>('GET', '/me');
  }

  listProjects() {
    return this.request<{ projects: ProjectSummary[] }>('GET', '/projects');
  }

  getProject(id: string) {
    return this.request<ProjectSummary>('GET', `/projects/${id}`);
  }

  createProject(form: FormData) {
    return this.request<{ project_id: string; report: unknown; project: ProjectSummary }>(
      'POST',
      '/projects',
      form,
    );
  }

  next(projectId: string) {
    return this.request<ServedAssignment>('GET', `/projects/${projectId}/next`);
  }

  label(assignmentId: string, labelId: string) {
    return this.request<{ outcome: string; record_status: string }>(
      'POST',
      `/assignments/${assignmentId}/label`,
      { label_id: labelId },
    );
  }

  skip(assignmentId: string) {
    return this.request<{ record_status: string }>('POST', `/assignments/${assignmentId}/skip`);
  }

  history(projectId: string, page = 1) {
    return this.request<{ total: number; items: HistoryItem[] }>(
      'GET',
      `/projects/${projectId}/history?page=${page}`,
    );
  }

  modifyAnnotation(annotationId: string, labelId: string) {
    return this.request<{ annotation_id: string }>('PATCH', `/annotations/${annotationId}`, {
      label_id: labelId,
    });
  }

  labelMetrics(projectId: string) {
    return this.request<{ coders: LabelCounts[] }>('GET', `/projects/${projectId}/metrics/labels`);
  }

  timingMetrics(projectId: string) {
    return this.request<{ coders: TimingRow[] }>('GET', `/projects/${projectId}/metrics/timing`);
  }

  modelMetrics(projectId: string) {
    return this.request<{ enabled: boolean; series: ModelPoint[] }>(
      'GET',
      `/projects/${projectId}/metrics/model`,
    );
  }

  irrMetrics(projectId: string) {
    return this.request<IrrPayload>('GET', `/projects/${projectId}/metrics/irr`);
  }

  skippedQueue(projectId: string) {
    return this.request<{ records: QueueRecord[] }>(
      'GET',
      `/projects/${projectId}/admin/skipped`,
    );
  }

  disagreementQueue(projectId: string) {
    return this.request<{ records: QueueRecord[] }>(
      'GET',
      `/projects/${projectId}/admin/disagreements`,
    );
  }

  adjudicate(recordId: string, decision: { label_id?: string; discard?: boolean }) {
    return this.request<{ record_status: string }>(
      'POST',
      `/records/${recordId}/adjudicate`,
      decision,
    );
  }

  addCoder(projectId: string, username: string, role: string) {
    return this.request<{ coder_id: string; username: string; role: string; token: string }>(
      'POST',
      `/projects/${projectId}/coders`,
      { username, role },
    );
  }
}
