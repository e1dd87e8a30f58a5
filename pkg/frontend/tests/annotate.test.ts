/**
 * Annotation loop behavior against a scripted fake API: card/empty-notice
 * exclusivity, button disabling while a submission is in flight, replay
 * (409) absorption, and the retry banner on network failure.
 */

import { describe, expect, it } from 'vitest';

import { AnnotateLoop } from '../src/annotate.js';
import { ApiClient, ApiError } from '../src/api.js';

interface Script {
  next: () => Promise<any>;
  label?: (assignmentId: string, labelId: string) => Promise<any>;
  skip?: (assignmentId: string) => Promise<any>;
}

function fakeApi(script: Script): ApiClient {
  const api = Object.create(ApiClient.prototype) as ApiClient;
  (api as any).next = script.next;
  (api as any).label = script.label ?? (async () => ({ outcome: 'finalized' }));
  (api as any).skip = script.skip ?? (async () => ({ record_status: 'pending_skip_adjudication' }));
  return api;
}

function served(id: string, text: string) {
  return {
    assignment: { id, record_id: `r-${id}`, lease_expires_at: 0 },
    record: { id: `r-${id}`, text },
    labels: [
      { id: 'L1', name: 'pos', description: '' },
      { id: 'L2', name: 'neg', description: '' },
    ],
    codebook_url: null,
  };
}

function clickWhenRendered(root: HTMLElement, selector: string): Promise<void> {
  return new Promise((resolve) => {
    const tick = () => {
      const button = root.querySelector<HTMLButtonElement>(selector);
      if (button && !button.disabled) {
        button.click();
        resolve();
      } else {
        setTimeout(tick, 1);
      }
    };
    tick();
  });
}

describe('annotation loop', () => {
  it('labels records one after another and fetches the next card', async () => {
    const labeled: string[] = [];
    let cursor = 0;
    const api = fakeApi({
      next: async () => (cursor < 3 ? served(`a${cursor++}`, `doc ${cursor}`) : { assignment: null }),
      label: async (assignmentId) => {
        labeled.push(assignmentId);
        return { outcome: 'finalized' };
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 3, emptyBackoffMs: [1] });
    const run = loop.run();
    for (let i = 0; i < 3; i++) {
      await clickWhenRendered(root, 'button[data-label-id="L1"]');
    }
    await run;
    expect(labeled).toEqual(['a0', 'a1', 'a2']);
  });

  it('shows exactly one of card or empty notice', async () => {
    let calls = 0;
    const api = fakeApi({
      next: async () => {
        calls += 1;
        if (calls === 1) return { assignment: null };
        return served('a1', 'hello');
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 1, emptyBackoffMs: [1] });
    const run = loop.run();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(root.querySelector('[data-testid="empty-queue"]')).toBeTruthy();
    expect(root.querySelector('[data-testid="annotation-card"]')).toBeNull();
    await clickWhenRendered(root, 'button[data-label-id="L2"]');
    expect(root.querySelector('[data-testid="empty-queue"]')).toBeNull();
    await run;
  });

  it('disables all buttons while a submission is in flight', async () => {
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => (release = resolve));
    const api = fakeApi({
      next: async () => served('a1', 'slow'),
      label: async () => {
        await gate;
        return { outcome: 'finalized' };
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 1, emptyBackoffMs: [1] });
    const run = loop.run();
    await clickWhenRendered(root, 'button[data-label-id="L1"]');
    const buttons = [...root.querySelectorAll('button')];
    expect(buttons.length).toBeGreaterThan(0);
    expect(buttons.every((b) => b.disabled)).toBe(true);
    release();
    await run;
  });

  it('absorbs a 409 replay silently and moves on', async () => {
    let labelCalls = 0;
    let cursor = 0;
    const api = fakeApi({
      next: async () => (cursor < 2 ? served(`a${cursor++}`, 'doc') : { assignment: null }),
      label: async () => {
        labelCalls += 1;
        if (labelCalls === 1) throw new ApiError(409, 'conflict', 'assignment already resolved');
        return { outcome: 'finalized' };
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 1, emptyBackoffMs: [1] });
    const run = loop.run();
    await clickWhenRendered(root, 'button[data-label-id="L1"]');
    // first click 409s; the loop silently refetches and serves the next card
    await clickWhenRendered(root, 'button[data-label-id="L1"]');
    await run;
    expect(root.querySelector('[data-testid="retry-banner"]')).toBeNull();
    expect(labelCalls).toBe(2);
  });

  it('shows a retry banner on network failure and keeps polling', async () => {
    let calls = 0;
    const api = fakeApi({
      next: async () => {
        calls += 1;
        if (calls === 1) throw new TypeError('fetch failed');
        return served('a1', 'doc');
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 1, emptyBackoffMs: [1] });
    const run = loop.run();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(root.querySelector('[data-testid="retry-banner"]')).toBeTruthy();
    await clickWhenRendered(root, 'button[data-label-id="L1"]');
    await run;
    expect(loop.actions).toBe(1);
  });

  it('skip posts and continues the loop', async () => {
    const skipped: string[] = [];
    let cursor = 0;
    const api = fakeApi({
      next: async () => (cursor < 1 ? served(`a${cursor++}`, 'doc') : { assignment: null }),
      skip: async (assignmentId) => {
        skipped.push(assignmentId);
        return { record_status: 'pending_skip_adjudication' };
      },
    });
    const root = document.createElement('div');
    const loop = new AnnotateLoop(root, api, 'p1', { maxActions: 1, emptyBackoffMs: [1] });
    const run = loop.run();
    await clickWhenRendered(root, '[data-testid="skip-button"]');
    await run;
    expect(skipped).toEqual(['a0']);
  });
});
