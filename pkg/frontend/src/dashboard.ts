/**
 * Admin dashboard: four metric views (label distribution, labeling time,
 * model performance, inter-rater reliability) plus the adjudication queues.
 * Every statistic shown is the server's number verbatim; views refresh on a
 * poll (default 30 s).
 */

import {
  ApiClient,
  IrrPayload,
  LabelCounts,
  ModelPoint,
  QueueRecord,
  TimingRow,
} from './api.js';
import { boxPlot, fmt, groupedBars, heatMap, lineChart } from './charts.js';

export const DEFAULT_POLL_MS = 30_000;

function section(title: string, testid: string): { wrap: HTMLElement; body: HTMLElement } {
  const wrap = document.createElement('section');
  wrap.className = 'dashboard-view';
  wrap.dataset.testid = testid;
  const heading = document.createElement('h3');
  heading.textContent = title;
  wrap.appendChild(heading);
  const body = document.createElement('div');
  body.className = 'view-body';
  wrap.appendChild(body);
  return { wrap, body };
}

function emptyState(body: HTMLElement, message: string) {
  const note = document.createElement('p');
  note.className = 'empty-state';
  note.textContent = message;
  body.appendChild(note);
}

export function renderLabelDistribution(
  body: HTMLElement,
  payload: { coders: LabelCounts[] },
  labelNames: string[],
): void {
  body.innerHTML = '';
  if (!payload.coders.length) {
    emptyState(body, 'No annotations yet.');
    return;
  }
  body.appendChild(
    groupedBars(
      payload.coders.map((c) => ({ name: c.username, counts: c.counts })),
      labelNames,
    ),
  );
  const table = document.createElement('table');
  table.className = 'stats-table';
  for (const coder of payload.coders) {
    for (const label of labelNames) {
      if (!(label in coder.counts)) continue;
      const row = table.insertRow();
      row.insertCell().textContent = coder.username;
      row.insertCell().textContent = label;
      const cell = row.insertCell();
      cell.dataset.stat = `count:${coder.username}:${label}`;
      cell.textContent = fmt(coder.counts[label]);
    }
  }
  body.appendChild(table);
}

export function renderTiming(body: HTMLElement, payload: { coders: TimingRow[] }): void {
  body.innerHTML = '';
  if (!payload.coders.length) {
    emptyState(body, 'No labeling times recorded yet.');
    return;
  }
  body.appendChild(
    boxPlot(payload.coders.map((c) => ({ name: c.username, ...c }))),
  );
  const table = document.createElement('table');
  table.className = 'stats-table';
  const header = table.insertRow();
  for (const name of ['coder', 'min', 'q1', 'median', 'q3', 'max', 'outliers']) {
    const cell = document.createElement('th');
    cell.textContent = name;
    header.appendChild(cell);
  }
  for (const coder of payload.coders) {
    const row = table.insertRow();
    row.insertCell().textContent = coder.username;
    for (const key of ['minimum', 'q1', 'median', 'q3', 'maximum'] as const) {
      const cell = row.insertCell();
      cell.dataset.stat = `timing:${coder.username}:${key}`;
      cell.textContent = fmt(coder[key]);
    }
    const cell = row.insertCell();
    cell.dataset.stat = `timing:${coder.username}:outliers`;
    cell.textContent = coder.outliers.map(fmt).join(', ');
  }
  body.appendChild(table);
}

export function renderModel(
  body: HTMLElement,
  payload: { enabled: boolean; series: ModelPoint[] },
): void {
  body.innerHTML = '';
  if (!payload.enabled) {
    emptyState(body, 'Active learning is disabled for this project.');
    return;
  }
  if (!payload.series.length) {
    emptyState(body, 'No model trained yet.');
    return;
  }
  const metrics = ['accuracy', 'macro_precision', 'macro_recall', 'macro_f1'] as const;
  body.appendChild(
    lineChart(
      metrics.map((name) => ({
        name,
        points: payload.series.map((p) => ({ x: p.batch_index, y: p[name] })),
      })),
    ),
  );
  const table = document.createElement('table');
  table.className = 'stats-table';
  const header = table.insertRow();
  for (const name of ['batch', ...metrics]) {
    const cell = document.createElement('th');
    cell.textContent = name;
    header.appendChild(cell);
  }
  for (const point of payload.series) {
    const row = table.insertRow();
    row.insertCell().textContent = fmt(point.batch_index);
    for (const name of metrics) {
      const cell = row.insertCell();
      cell.dataset.stat = `model:${point.batch_index}:${name}`;
      cell.textContent = fmt(point[name]);
    }
  }
  body.appendChild(table);
}

export function renderIrr(body: HTMLElement, payload: IrrPayload): void {
  body.innerHTML = '';
  if (!payload.enabled) {
    emptyState(body, 'Inter-rater reliability is disabled for this project.');
    return;
  }
  const summary = document.createElement('p');
  summary.className = 'irr-summary';
  const kappa = document.createElement('span');
  kappa.dataset.stat = 'irr:kappa';
  kappa.textContent = fmt(payload.kappa ?? null);
  const percent = document.createElement('span');
  percent.dataset.stat = 'irr:percent_overall';
  percent.textContent = fmt(payload.percent_overall ?? null);
  summary.append(`${payload.statistic ?? 'kappa'}: `, kappa, ' - overall agreement: ', percent);
  body.appendChild(summary);
  if (payload.pairwise?.length) {
    const list = document.createElement('ul');
    list.className = 'pairwise-list';
    for (const pair of payload.pairwise) {
      const item = document.createElement('li');
      const value = document.createElement('span');
      value.dataset.stat = `irr:pair:${pair.coder_a}:${pair.coder_b}`;
      value.textContent = fmt(pair.agreement);
      item.append(`${pair.coder_a} / ${pair.coder_b}: `, value, ` (${fmt(pair.items)} shared)`);
      list.appendChild(item);
    }
    body.appendChild(list);
  }
  if (payload.matrix) {
    body.appendChild(heatMap(payload.matrix.labels, payload.matrix.counts));
  }
}

export function renderQueues(
  root: HTMLElement,
  skipped: QueueRecord[],
  disagreements: QueueRecord[],
  labelDefs: { id: string; name: string }[],
  onDecision: (recordId: string, decision: { label_id?: string; discard?: boolean }) => void,
): void {
  root.innerHTML = '';
  const build = (title: string, records: QueueRecord[], testid: string) => {
    const { wrap, body } = section(title, testid);
    if (!records.length) {
      emptyState(body, 'Queue is empty.');
    }
    for (const record of records) {
      const entry = document.createElement('div');
      entry.className = 'queue-entry';
      entry.dataset.recordId = record.record_id;
      const text = document.createElement('p');
      text.textContent = record.text;
      entry.appendChild(text);
      if (record.votes.length) {
        const votes = document.createElement('ul');
        votes.className = 'vote-list';
        for (const vote of record.votes) {
          const item = document.createElement('li');
          item.textContent = `${vote.username}: ${vote.label_name}`;
          votes.appendChild(item);
        }
        entry.appendChild(votes);
      }
      const actions = document.createElement('div');
      actions.className = 'queue-actions';
      for (const label of labelDefs) {
        const button = document.createElement('button');
        button.textContent = label.name;
        button.addEventListener('click', () =>
          onDecision(record.record_id, { label_id: label.id }),
        );
        actions.appendChild(button);
      }
      const discard = document.createElement('button');
      discard.textContent = 'Discard';
      discard.className = 'discard-button';
      discard.addEventListener('click', () => onDecision(record.record_id, { discard: true }));
      actions.appendChild(discard);
      entry.appendChild(actions);
      body.appendChild(entry);
    }
    root.appendChild(wrap);
  };
  build('Skipped records', skipped, 'queue-skipped');
  build('Label disagreements', disagreements, 'queue-disagreements');
}

export class Dashboard {
  private timer: ReturnType<typeof setTimeout> | null = null;
  readonly views: Record<'labels' | 'timing' | 'model' | 'irr', HTMLElement>;
  private queueRoot: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
    private labelDefs: { id: string; name: string }[],
    private pollMs = DEFAULT_POLL_MS,
  ) {
    root.innerHTML = '';
    const labels = section('Label distribution per coder', 'view-labels');
    const timing = section('Time to label', 'view-timing');
    const model = section('Model performance', 'view-model');
    const irr = section('Inter-rater reliability', 'view-irr');
    for (const view of [labels, timing, model, irr]) root.appendChild(view.wrap);
    this.queueRoot = document.createElement('div');
    this.queueRoot.className = 'queues';
    root.appendChild(this.queueRoot);
    this.views = { labels: labels.body, timing: timing.body, model: model.body, irr: irr.body };
  }

  async refresh(): Promise<void> {
    const [labels, timing, model, irr, skipped, disagreements] = await Promise.all([
      this.api.labelMetrics(this.projectId),
      this.api.timingMetrics(this.projectId),
      this.api.modelMetrics(this.projectId),
      this.api.irrMetrics(this.projectId),
      this.api.skippedQueue(this.projectId),
      this.api.disagreementQueue(this.projectId),
    ]);
    renderLabelDistribution(this.views.labels, labels, this.labelDefs.map((l) => l.name));
    renderTiming(this.views.timing, timing);
    renderModel(this.views.model, model);
    renderIrr(this.views.irr, irr);
    renderQueues(this.queueRoot, skipped.records, disagreements.records, this.labelDefs, (recordId, decision) => {
      this.api.adjudicate(recordId, decision).then(() => this.refresh()).catch(() => this.refresh());
    });
  }

  start(): void {
    const tick = async () => {
      try {
        await this.refresh();
      } finally {
        this.timer = setTimeout(tick, this.pollMs);
      }
    };
    void tick();
  }

  stop(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }
}
