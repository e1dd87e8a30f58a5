/**
 * Creation wizard: client-side stage validation mirrors the server's rules
 * (notably the two-label minimum) before any request is sent, and the final
 * submission is one atomic multipart POST.
 */

import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { Wizard, buildForm, validateStage } from '../src/wizard.js';

function wizardWithApi(createProject: (form: FormData) => Promise<any>) {
  const api = Object.create(ApiClient.prototype) as ApiClient;
  (api as any).createProject = createProject;
  (api as any).addCoder = async () => ({});
  const root = document.createElement('div');
  let created: string | null = null;
  const wizard = new Wizard(root, api, (projectId) => (created = projectId));
  wizard.render([]);
  return { wizard, root, createdRef: () => created };
}

describe('stage validation', () => {
  it('requires a nonempty project name', () => {
    const errors = validateStage('info', {
      name: ' ',
      description: '',
      labels: [],
      coders: [],
      settings: {},
      csvFile: null,
      codebookFile: null,
    });
    expect(errors).toContain('project name must be nonempty');
  });

  it('requires two labels before submit, mirroring the server rule', () => {
    const errors = validateStage('labels', {
      name: 'p',
      description: '',
      labels: [{ name: 'only', description: '' }],
      coders: [],
      settings: {},
      csvFile: null,
      codebookFile: null,
    });
    expect(errors).toContain('at least 2 labels are required');
  });

  it('rejects duplicate label names', () => {
    const errors = validateStage('labels', {
      name: 'p',
      description: '',
      labels: [
        { name: 'a', description: '' },
        { name: 'a', description: '' },
      ],
      coders: [],
      settings: {},
      csvFile: null,
      codebookFile: null,
    });
    expect(errors).toContain('label names must be unique');
  });
});

describe('wizard flow', () => {
  it('blocks advancing past labels with one label and shows the inline error', () => {
    const { wizard, root } = wizardWithApi(async () => ({ project_id: 'x', report: {} }));
    wizard.state.name = 'demo';
    wizard.next(); // info -> labels
    expect(wizard.stage).toBe('labels');
    wizard.state.labels = [{ name: 'solo', description: '' }];
    const errors = wizard.next();
    expect(wizard.stage).toBe('labels'); // did not advance
    expect(errors).toContain('at least 2 labels are required');
    const shown = root.querySelector('[data-testid="wizard-errors"]');
    expect(shown?.textContent).toContain('at least 2 labels');
  });

  it('walks all five stages and submits one multipart POST', async () => {
    let receivedForm: FormData | null = null;
    const { wizard, createdRef } = wizardWithApi(async (form) => {
      receivedForm = form;
      return { project_id: 'proj-9', report: { accepted: 2 } };
    });
    wizard.state.name = 'demo';
    wizard.state.labels = [
      { name: 'pos', description: 'good' },
      { name: 'neg', description: 'bad' },
    ];
    wizard.state.csvFile = new File(['ID,Text,Label\n1,hello,\n'], 'c.csv', { type: 'text/csv' });
    for (const expected of ['labels', 'permissions', 'settings', 'upload']) {
      wizard.next();
      expect(wizard.stage).toBe(expected);
    }
    await wizard.submit();
    expect(createdRef()).toBe('proj-9');
    expect(receivedForm).not.toBeNull();
    expect(receivedForm!.get('name')).toBe('demo');
    expect(JSON.parse(receivedForm!.get('labels') as string)).toHaveLength(2);
    expect(receivedForm!.get('data')).toBeTruthy();
  });

  it('renders server 400 details as field errors', async () => {
    const { wizard, root } = wizardWithApi(async () => {
      const { ApiError } = await import('../src/api.js');
      throw new ApiError(400, 'validation_failed', 'invalid', ['unknown pre-label: `maybe`']);
    });
    wizard.state.name = 'demo';
    wizard.state.labels = [
      { name: 'pos', description: '' },
      { name: 'neg', description: '' },
    ];
    wizard.state.csvFile = new File(['ID,Text\n1,x\n'], 'c.csv', { type: 'text/csv' });
    await wizard.submit();
    const shown = root.querySelector('[data-testid="wizard-errors"]');
    expect(shown?.textContent).toContain('unknown pre-label');
  });
});

describe('buildForm', () => {
  it('serializes labels and settings as JSON fields', () => {
    const form = buildForm({
      name: 'n',
      description: 'd',
      labels: [
        { name: 'a', description: '' },
        { name: 'b', description: '' },
      ],
      coders: [],
      settings: { batch_size: 10, irr_enabled: true },
      csvFile: null,
      codebookFile: null,
    });
    expect(JSON.parse(form.get('settings') as string)).toEqual({ batch_size: 10, irr_enabled: true });
    expect(form.get('codebook')).toBeNull();
  });
});
