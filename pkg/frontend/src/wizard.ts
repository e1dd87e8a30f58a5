/**
 * Project creation wizard. Stages (info -> labels -> permissions -> advanced
 * settings -> upload) are client-side only; submission is one atomic POST.
 * Server-side rules that can be checked locally (at least two labels) are
 * mirrored inline before submit; a 400 response maps onto field errors.
 */

import { ApiClient, ApiError } from './api.js';

export interface WizardState {
  name: string;
  description: string;
  labels: { name: string; description: string }[];
  coders: { username: string; role: string }[];
  settings: Record<string, unknown>;
  csvFile: File | null;
  codebookFile: File | null;
}

export const WIZARD_STAGES = ['info', 'labels', 'permissions', 'settings', 'upload'] as const;
export type WizardStage = (typeof WIZARD_STAGES)[number];

export function validateStage(stage: WizardStage, state: WizardState): string[] {
  const errors: string[] = [];
  switch (stage) {
    case 'info':
      if (!state.name.trim()) errors.push('project name must be nonempty');
      break;
    case 'labels': {
      const names = state.labels.map((l) => l.name.trim()).filter(Boolean);
      if (names.length < 2) errors.push('at least 2 labels are required');
      if (new Set(names).size !== names.length) errors.push('label names must be unique');
      break;
    }
    case 'upload':
      if (!state.csvFile) errors.push('a CSV upload is required');
      break;
    default:
      break;
  }
  return errors;
}

export function buildForm(state: WizardState): FormData {
  const form = new FormData();
  form.set('name', state.name);
  form.set('description', state.description);
  form.set('labels', JSON.stringify(state.labels));
  form.set('settings', JSON.stringify(state.settings));
  if (state.csvFile) form.set('data', state.csvFile);
  if (state.codebookFile) form.set('codebook', state.codebookFile);
  return form;
}

export class Wizard {
  state: WizardState = {
    name: '',
    description: '',
    labels: [
      { name: '', description: '' },
      { name: '', description: '' },
    ],
    coders: [],
    settings: {},
    csvFile: null,
    codebookFile: null,
  };
  stageIndex = 0;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private onCreated: (projectId: string, report: unknown) => void,
  ) {}

  get stage(): WizardStage {
    return WIZARD_STAGES[this.stageIndex];
  }

  next(): string[] {
    const errors = validateStage(this.stage, this.state);
    if (!errors.length && this.stageIndex < WIZARD_STAGES.length - 1) {
      this.stageIndex += 1;
    }
    this.render(errors);
    return errors;
  }

  back(): void {
    if (this.stageIndex > 0) this.stageIndex -= 1;
    this.render([]);
  }

  async submit(): Promise<void> {
    const errors = WIZARD_STAGES.flatMap((stage) => validateStage(stage, this.state));
    if (errors.length) {
      this.render(errors);
      return;
    }
    try {
      const created = await this.api.createProject(buildForm(this.state));
      for (const coder of this.state.coders) {
        if (coder.username.trim()) {
          await this.api.addCoder(created.project_id, coder.username.trim(), coder.role);
        }
      }
      this.onCreated(created.project_id, created.report);
    } catch (error) {
      if (error instanceof ApiError) {
        this.render(error.details.length ? error.details : [error.message]);
      } else {
        this.render([String(error)]);
      }
    }
  }

  render(errors: string[]): void {
    this.root.innerHTML = '';
    const wrap = document.createElement('div');
    wrap.className = 'wizard';
    wrap.dataset.stage = this.stage;

    const steps = document.createElement('ol');
    steps.className = 'wizard-steps';
    WIZARD_STAGES.forEach((stage, i) => {
      const item = document.createElement('li');
      item.textContent = stage;
      if (i === this.stageIndex) item.className = 'active';
      steps.appendChild(item);
    });
    wrap.appendChild(steps);

    if (errors.length) {
      const list = document.createElement('ul');
      list.className = 'field-errors';
      list.dataset.testid = 'wizard-errors';
      for (const error of errors) {
        const item = document.createElement('li');
        item.textContent = error;
        list.appendChild(item);
      }
      wrap.appendChild(list);
    }

    const body = document.createElement('div');
    body.className = 'wizard-body';
    this.renderStage(body);
    wrap.appendChild(body);

    const nav = document.createElement('div');
    nav.className = 'wizard-nav';
    const back = document.createElement('button');
    back.textContent = 'Back';
    back.disabled = this.stageIndex === 0;
    back.addEventListener('click', () => this.back());
    nav.appendChild(back);
    if (this.stageIndex < WIZARD_STAGES.length - 1) {
      const next = document.createElement('button');
      next.textContent = 'Next';
      next.dataset.testid = 'wizard-next';
      next.addEventListener('click', () => this.next());
      nav.appendChild(next);
    } else {
      const create = document.createElement('button');
      create.textContent = 'Create project';
      create.dataset.testid = 'wizard-submit';
      create.addEventListener('click', () => void this.submit());
      nav.appendChild(create);
    }
    wrap.appendChild(nav);
    this.root.appendChild(wrap);
  }

  private renderStage(body: HTMLElement): void {
    const bind = (input: HTMLInputElement | HTMLTextAreaElement, write: (v: string) => void) => {
      input.addEventListener('input', () => write(input.value));
    };
    switch (this.stage) {
      case 'info': {
        const name = document.createElement('input');
        name.placeholder = 'Project name';
        name.value = this.state.name;
        name.dataset.testid = 'wizard-name';
        bind(name, (v) => (this.state.name = v));
        const description = document.createElement('textarea');
        description.placeholder = 'Description';
        description.value = this.state.description;
        bind(description, (v) => (this.state.description = v));
        body.append(name, description);
        break;
      }
      case 'labels': {
        this.state.labels.forEach((label, i) => {
          const row = document.createElement('div');
          row.className = 'label-row';
          const name = document.createElement('input');
          name.placeholder = `Label ${i + 1}`;
          name.value = label.name;
          name.dataset.testid = `wizard-label-${i}`;
          bind(name, (v) => (label.name = v));
          const description = document.createElement('input');
          description.placeholder = 'Definition';
          description.value = label.description;
          bind(description, (v) => (label.description = v));
          row.append(name, description);
          body.appendChild(row);
        });
        const add = document.createElement('button');
        add.textContent = 'Add label';
        add.addEventListener('click', () => {
          this.state.labels.push({ name: '', description: '' });
          this.render([]);
        });
        body.appendChild(add);
        break;
      }
      case 'permissions': {
        this.state.coders.forEach((coder) => {
          const row = document.createElement('div');
          const username = document.createElement('input');
          username.value = coder.username;
          bind(username, (v) => (coder.username = v));
          const role = document.createElement('select');
          for (const value of ['coder', 'admin']) {
            const option = document.createElement('option');
            option.value = value;
            option.textContent = value;
            option.selected = coder.role === value;
            role.appendChild(option);
          }
          role.addEventListener('change', () => (coder.role = role.value));
          row.append(username, role);
          body.appendChild(row);
        });
        const add = document.createElement('button');
        add.textContent = 'Add coder';
        add.addEventListener('click', () => {
          this.state.coders.push({ username: '', role: 'coder' });
          this.render([]);
        });
        body.appendChild(add);
        break;
      }
      case 'settings': {
        const fields: [string, string][] = [
          ['batch_size', 'Batch size'],
          ['al_method', 'Active learning method (random | least_confident | margin | entropy)'],
          ['irr_enabled', 'Enable IRR (true/false)'],
          ['irr_overlap_percent', 'IRR overlap percent'],
          ['irr_coder_count', 'Coders per double-coded record'],
        ];
        for (const [key, placeholder] of fields) {
          const input = document.createElement('input');
          input.placeholder = placeholder;
          input.dataset.setting = key;
          if (key in this.state.settings) input.value = String(this.state.settings[key]);
          input.addEventListener('input', () => {
            const raw = input.value.trim();
            if (!raw) {
              delete this.state.settings[key];
            } else if (raw === 'true' || raw === 'false') {
              this.state.settings[key] = raw === 'true';
            } else if (!Number.isNaN(Number(raw)) && key !== 'al_method') {
              this.state.settings[key] = Number(raw);
            } else {
              this.state.settings[key] = raw;
            }
          });
          body.appendChild(input);
        }
        break;
      }
      case 'upload': {
        const csv = document.createElement('input');
        csv.type = 'file';
        csv.accept = '.csv,text/csv';
        csv.dataset.testid = 'wizard-csv';
        csv.addEventListener('change', () => {
          this.state.csvFile = csv.files?.[0] ?? null;
        });
        const codebook = document.createElement('input');
        codebook.type = 'file';
        codebook.accept = 'application/pdf';
        codebook.addEventListener('change', () => {
          this.state.codebookFile = codebook.files?.[0] ?? null;
        });
        const csvLabel = document.createElement('label');
        csvLabel.textContent = 'Corpus CSV (header: ID,Text,Label)';
        const codebookLabel = document.createElement('label');
        codebookLabel.textContent = 'Codebook PDF (optional)';
        body.append(csvLabel, csv, codebookLabel, codebook);
        break;
      }
    }
  }
}
