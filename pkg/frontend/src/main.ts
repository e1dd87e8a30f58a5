/**
 * App bootstrap: token entry, project selection, and role-based routing into
 * the annotation view (coders) or the dashboard + wizard (admins).
 */

import { AnnotateLoop, renderHistory } from './annotate.js';
import { ApiClient } from './api.js';
import { Dashboard } from './dashboard.js';
import { Wizard } from './wizard.js';

const TOKEN_KEY = 'labelforge_token';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

async function boot(root: HTMLElement): Promise<void> {
  const token = localStorage.getItem(TOKEN_KEY);
  if (!token) {
    renderLogin(root);
    return;
  }
  const api = new ApiClient(token);
  let me;
  try {
    me = await api.me();
  } catch {
    localStorage.removeItem(TOKEN_KEY);
    renderLogin(root, 'That token was rejected - paste a valid one.');
    return;
  }
  renderShell(root, api, me);
}

function renderLogin(root: HTMLElement, message = ''): void {
  root.innerHTML = '';
  const box = el('div', 'login-box');
  box.appendChild(el('h2', '', 'labelforge'));
  if (message) box.appendChild(el('p', 'login-error', message));
  box.appendChild(
    el('p', '', 'Paste your session token (from create-admin or your project admin).'),
  );
  const input = el('input');
  input.type = 'password';
  input.placeholder = 'session token';
  const go = el('button', '', 'Sign in');
  go.addEventListener('click', () => {
    if (input.value.trim()) {
      localStorage.setItem(TOKEN_KEY, input.value.trim());
      void boot(root);
    }
  });
  box.append(input, go);
  root.appendChild(box);
}

async function renderShell(
  root: HTMLElement,
  api: ApiClient,
  me: { username: string; role: string },
): Promise<void> {
  root.innerHTML = '';
  const header = el('header', 'topbar');
  header.appendChild(el('strong', '', 'labelforge'));
  header.appendChild(el('span', 'whoami', `${me.username} (${me.role})`));
  const signOut = el('button', 'signout', 'Sign out');
  signOut.addEventListener('click', () => {
    localStorage.removeItem(TOKEN_KEY);
    void boot(root);
  });
  header.appendChild(signOut);
  root.appendChild(header);

  const content = el('main', 'content');
  root.appendChild(content);

  const { projects } = await api.listProjects();
  const picker = el('div', 'project-picker');
  picker.appendChild(el('h3', '', 'Projects'));
  const list = el('ul', 'project-list');
  for (const project of projects) {
    const item = el('li');
    const open = el('button', '', project.name);
    open.addEventListener('click', () => renderProject(content, api, me, project.id));
    item.appendChild(open);
    list.appendChild(item);
  }
  if (!projects.length) picker.appendChild(el('p', '', 'No projects yet.'));
  picker.appendChild(list);
  if (me.role === 'admin') {
    const create = el('button', 'new-project', 'New project...');
    create.addEventListener('click', () => {
      const host = el('div', 'wizard-host');
      content.innerHTML = '';
      content.appendChild(host);
      new Wizard(host, api, (projectId) => renderProject(content, api, me, projectId)).render([]);
    });
    picker.appendChild(create);
  }
  content.appendChild(picker);
}

async function renderProject(
  content: HTMLElement,
  api: ApiClient,
  me: { username: string; role: string },
  projectId: string,
): Promise<void> {
  content.innerHTML = '';
  const project = await api.getProject(projectId);
  content.appendChild(el('h2', '', project.name));

  const tabBar = el('div', 'tabs');
  const pane = el('div', 'pane');
  content.append(tabBar, pane);
  let activeLoop: AnnotateLoop | null = null;
  let activeDashboard: Dashboard | null = null;

  const switchTo = (tab: string) => {
    activeLoop?.stop();
    activeDashboard?.stop();
    pane.innerHTML = '';
    if (tab === 'annotate') {
      activeLoop = new AnnotateLoop(pane, api, projectId);
      void activeLoop.run();
    } else if (tab === 'history') {
      void renderHistory(pane, api, projectId);
    } else if (tab === 'dashboard') {
      activeDashboard = new Dashboard(pane, api, projectId, project.labels);
      activeDashboard.start();
    }
  };

  const tabs = me.role === 'admin' ? ['annotate', 'history', 'dashboard'] : ['annotate', 'history'];
  for (const tab of tabs) {
    const button = el('button', 'tab', tab);
    button.addEventListener('click', () => switchTo(tab));
    tabBar.appendChild(button);
  }
  switchTo('annotate');
}

const rootNode = document.getElementById('app');
if (rootNode) {
  void boot(rootNode);
}
