import { createApi } from './api';
import { renderEditPanel } from './editPanel';
import { el } from './format';
import { renderDashboard } from './heatmap';
import './style.css';

const api = createApi();

function dashboardTab(): HTMLElement {
  const root = el('div', 'dashboard-tab');
  const loader = el('form', 'report-loader');
  const jobInput = el('input', 'job-id') as HTMLInputElement;
  jobInput.placeholder = 'job id, e.g. job-0001';
  const loadButton = el('button', undefined, 'Load report');
  loadButton.type = 'submit';
  loader.append(jobInput, loadButton);

  const holder = el('div', 'report-holder');
  holder.append(renderDashboard(null));

  loader.addEventListener('submit', (event) => {
    event.preventDefault();
    void api
      .report(jobInput.value.trim())
      .then((report) => holder.replaceChildren(renderDashboard(report)))
      .catch((error: Error) =>
        holder.replaceChildren(el('p', 'empty-state', `cannot load report: ${error.message}`)),
      );
  });

  root.append(loader, holder);
  return root;
}

async function boot(): Promise<void> {
  const app = document.querySelector('#app');
  if (!app) throw new Error('missing #app mount point');

  const languages = await api.languages();

  const tabs = el('nav', 'tabs');
  const panels = new Map<string, HTMLElement>([
    ['Probe', renderEditPanel(api, languages)],
    ['Dashboard', dashboardTab()],
  ]);
  const body = el('main', 'tab-body');

  for (const [name, panel] of panels) {
    const button = el('button', 'tab-button', name);
    button.type = 'button';
    button.addEventListener('click', () => {
      body.replaceChildren(panel);
      for (const other of tabs.querySelectorAll('.tab-button')) {
        other.classList.toggle('active', other === button);
      }
    });
    tabs.append(button);
  }

  app.append(el('h1', undefined, 'mledit console'), tabs, body);
  (tabs.querySelector('.tab-button') as HTMLButtonElement).click();
}

void boot().catch((error: Error) => {
  document.body.append(el('p', 'empty-state', `service unreachable: ${error.message}`));
});
