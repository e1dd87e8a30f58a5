/**
 * The coder annotation loop: fetch next -> render card -> on label/skip POST
 * and immediately fetch next. Exactly one of the card or the empty-queue
 * notice is visible; buttons disable while a submission is in flight, and a
 * 409 replay is absorbed by silently refetching.
 */

import { ApiClient, ApiError, ServedAssignment } from './api.js';

export interface AnnotateOptions {
  /** Backoff schedule (ms) while the queue is empty. */
  emptyBackoffMs?: number[];
  /** Stop after this many labeled/skipped records (0 = run forever). */
  maxActions?: number;
  onAction?: (outcome: string) => void;
}

const DEFAULT_BACKOFF = [1000, 2000, 5000, 10000, 30000];

export class AnnotateLoop {
  private stopped = false;
  private emptyStreak = 0;
  actions = 0;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
    private options: AnnotateOptions = {},
  ) {}

  stop() {
    this.stopped = true;
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      const max = this.options.maxActions ?? 0;
      if (max > 0 && this.actions >= max) return;
      let served: ServedAssignment;
      try {
        served = await this.api.next(this.projectId);
      } catch (error) {
        this.renderRetryBanner(error);
        await sleep(this.nextBackoff());
        continue;
      }
      if (!served.assignment) {
        this.renderEmptyNotice();
        await sleep(this.nextBackoff());
        continue;
      }
      this.emptyStreak = 0;
      const acted = await this.presentCard(served);
      if (!acted) return; // stopped while waiting
    }
  }

  /** Render one card and resolve once a label/skip round-trip finished. */
  private presentCard(served: ServedAssignment): Promise<boolean> {
    this.root.innerHTML = '';
    const card = el('div', 'annotation-card');
    card.dataset.testid = 'annotation-card';
    const text = el('p', 'record-text');
    text.textContent = served.record?.text ?? '';
    card.appendChild(text);
    if (served.codebook_url) {
      const link = document.createElement('a');
      link.href = served.codebook_url;
      link.textContent = 'Codebook';
      link.className = 'codebook-link';
      link.target = '_blank';
      card.appendChild(link);
    }
    const buttonRow = el('div', 'label-buttons');
    card.appendChild(buttonRow);
    this.root.appendChild(card);

    const buttons: HTMLButtonElement[] = [];
    const disableAll = () => buttons.forEach((b) => (b.disabled = true));

    return new Promise((resolve) => {
      const finish = async (action: () => Promise<string>) => {
        disableAll();
        try {
          const outcome = await action();
          this.actions += 1;
          this.options.onAction?.(outcome);
        } catch (error) {
          if (!(error instanceof ApiError && error.status === 409)) {
            this.renderRetryBanner(error);
            await sleep(this.nextBackoff());
          }
          // 409 = replay of a resolved assignment; silently move on
        }
        resolve(!this.stopped);
      };
      for (const label of served.labels ?? []) {
        const button = document.createElement('button');
        button.textContent = label.name;
        button.title = label.description;
        button.dataset.labelId = label.id;
        button.addEventListener('click', () =>
          finish(async () => (await this.api.label(served.assignment!.id, label.id)).outcome),
        );
        buttons.push(button);
        buttonRow.appendChild(button);
      }
      const skip = document.createElement('button');
      skip.textContent = 'Skip';
      skip.className = 'skip-button';
      skip.dataset.testid = 'skip-button';
      skip.addEventListener('click', () =>
        finish(async () => {
          await this.api.skip(served.assignment!.id);
          return 'skipped';
        }),
      );
      buttons.push(skip);
      buttonRow.appendChild(skip);
    });
  }

  private renderEmptyNotice() {
    this.root.innerHTML = '';
    const notice = el('div', 'empty-queue');
    notice.dataset.testid = 'empty-queue';
    notice.textContent = 'No records available right now - retrying shortly.';
    this.root.appendChild(notice);
  }

  private renderRetryBanner(error: unknown) {
    this.root.innerHTML = '';
    const banner = el('div', 'retry-banner');
    banner.dataset.testid = 'retry-banner';
    banner.textContent = `Connection problem (${String(error)}) - retrying.`;
    this.root.appendChild(banner);
  }

  private nextBackoff(): number {
    const schedule = this.options.emptyBackoffMs ?? DEFAULT_BACKOFF;
    const delay = schedule[Math.min(this.emptyStreak, schedule.length - 1)];
    this.emptyStreak += 1;
    return delay;
  }
}

export async function renderHistory(
  root: HTMLElement,
  api: ApiClient,
  projectId: string,
): Promise<void> {
  const history = await api.history(projectId);
  root.innerHTML = '';
  const list = el('ul', 'history-list');
  for (const item of history.items) {
    const entry = document.createElement('li');
    entry.dataset.annotationId = item.annotation_id;
    entry.textContent = `${item.label_name}: ${item.text}`;
    list.appendChild(entry);
  }
  root.appendChild(list);
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
