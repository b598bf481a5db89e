import { el, heatColor, scorePercent } from './format';
import { METRICS, type CaseRow, type CellReport, type EvalReport, type Measure, type MetricName } from './types';

function cellValue(cell: CellReport, metric: MetricName, measure: Measure): number | null {
  const pair = cell.metrics[metric];
  return pair ? pair[measure] : null;
}

function caseValue(row: CaseRow, metric: MetricName, measure: Measure): number | null {
  const value = row[`${metric}_${measure}`];
  return typeof value === 'number' ? value : null;
}

function orderedLangs(cells: CellReport[], key: 'edit_lang' | 'test_lang'): string[] {
  const seen: string[] = [];
  for (const cell of cells) {
    if (!seen.includes(cell[key])) seen.push(cell[key]);
  }
  return seen;
}

function renderDrilldown(cell: CellReport, metric: MetricName, measure: Measure): HTMLElement {
  const section = el('section', 'drilldown');
  section.append(
    el('h3', undefined, `${cell.edit_lang} → ${cell.test_lang}: ${cell.n_cases} cases`),
  );
  const table = el('table', 'case-table');
  const head = el('tr');
  head.append(el('th', undefined, 'record'));
  for (const name of METRICS) head.append(el('th', undefined, name));
  table.append(head);

  const rows = [...cell.cases].sort((a, b) => a.record_id.localeCompare(b.record_id));
  for (const row of rows) {
    const tr = el('tr', 'case-row');
    tr.append(el('td', 'record-id', row.record_id));
    for (const name of METRICS) {
      tr.append(el('td', undefined, scorePercent(caseValue(row, name, measure))));
    }
    table.append(tr);
  }
  section.append(table);

  if (cell.failures.length > 0) {
    const failures = el('div', 'cell-failures');
    for (const failure of cell.failures) {
      failures.append(
        el('div', undefined, `${failure.record_id} failed at ${failure.stage}: ${failure.message}`),
      );
    }
    section.append(failures);
  }
  return section;
}

/** Heatmap dashboard over a fetched report: one grid per selected metric,
 * EM/F1 toggled in place from the data already in hand, cells drilling down
 * to their case tables. With no report it shows the empty state. */
export function renderDashboard(report: EvalReport | null): HTMLElement {
  const root = el('div', 'dashboard');
  if (report === null || report.cells.length === 0) {
    root.append(el('p', 'empty-state', 'No report loaded. Start an evaluation or paste a job id.'));
    return root;
  }

  let metric: MetricName = 'reliability';
  let measure: Measure = 'em';
  let openCell: CellReport | null = null;

  const controls = el('div', 'dashboard-controls');
  const metricSelect = el('select', 'metric-select');
  for (const name of METRICS) {
    const option = el('option', undefined, name);
    option.value = name;
    metricSelect.append(option);
  }
  metricSelect.addEventListener('change', () => {
    metric = metricSelect.value as MetricName;
    draw();
  });

  const toggle = el('div', 'measure-toggle');
  const buttons = new Map<Measure, HTMLButtonElement>();
  for (const m of ['em', 'f1'] as const) {
    const button = el('button', 'measure-button', m.toUpperCase());
    button.type = 'button';
    button.addEventListener('click', () => {
      measure = m;
      draw();
    });
    buttons.set(m, button);
    toggle.append(button);
  }
  controls.append(metricSelect, toggle);

  const summary = el(
    'div',
    'report-summary',
    `${report.cells.length} cells · ${report.case_count} cases · ${report.failure_count} failures`,
  );

  const gridHolder = el('div', 'grid-holder');
  const drillHolder = el('div', 'drill-holder');
  root.append(controls, summary, gridHolder, drillHolder);

  const byPair = new Map<string, CellReport>();
  for (const cell of report.cells) byPair.set(`${cell.edit_lang}|${cell.test_lang}`, cell);
  const editLangs = orderedLangs(report.cells, 'edit_lang');
  const testLangs = orderedLangs(report.cells, 'test_lang');

  function draw(): void {
    for (const [m, button] of buttons) {
      button.setAttribute('aria-pressed', String(m === measure));
    }

    const table = el('table', 'heatmap');
    const head = el('tr');
    head.append(el('th', 'corner', 'edit \\ test'));
    for (const test of testLangs) head.append(el('th', undefined, test));
    table.append(head);

    for (const edit of editLangs) {
      const tr = el('tr');
      tr.append(el('th', undefined, edit));
      for (const test of testLangs) {
        const cell = byPair.get(`${edit}|${test}`);
        const td = el('td', 'heat-cell');
        if (!cell) {
          td.textContent = '–';
          tr.append(td);
          continue;
        }
        const value = cellValue(cell, metric, measure);
        td.textContent = scorePercent(value);
        if (value !== null) {
          td.style.backgroundColor = heatColor(value * 100);
        }
        td.dataset.edit = edit;
        td.dataset.test = test;
        td.addEventListener('click', () => {
          openCell = cell;
          draw();
        });
        tr.append(td);
      }
      table.append(tr);
    }
    gridHolder.replaceChildren(table);
    drillHolder.replaceChildren();
    if (openCell) drillHolder.append(renderDrilldown(openCell, metric, measure));
  }

  draw();
  return root;
}
