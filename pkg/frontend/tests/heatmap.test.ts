import { afterEach, describe, expect, it, vi } from 'vitest';

import { heatColor, scorePercent } from '../src/format';
import { renderDashboard } from '../src/heatmap';
import type { EvalReport } from '../src/types';
import report12 from './fixtures/report_12x12.json';
import report1 from './fixtures/report_1x1.json';

const fullReport = report12 as unknown as EvalReport;
const tinyReport = report1 as unknown as EvalReport;

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('matrix dashboard on the recorded 12x12 report', () => {
  it('renders a 12x12 grid of service-provided scores', () => {
    const dash = renderDashboard(fullReport);
    const rows = dash.querySelectorAll('.heatmap tr');
    expect(rows.length).toBe(13); // header + 12 edit languages
    const cells = dash.querySelectorAll('.heat-cell');
    expect(cells.length).toBe(144);
    const first = cells[0] as HTMLElement;
    expect(first.dataset.edit).toBe('EN');
    expect(first.dataset.test).toBe('EN');
    expect(first.textContent).toBe(scorePercent(fullReport.cells[0]!.metrics.reliability!.em));
    expect(first.style.backgroundColor).not.toBe('');
  });

  it('toggles EM to F1 in place without refetching', () => {
    const fetchSpy = vi.fn(() => {
      throw new Error('dashboard must not fetch');
    });
    vi.stubGlobal('fetch', fetchSpy);

    const dash = renderDashboard(fullReport);
    const cellFor = () =>
      dash.querySelector('.heat-cell[data-edit="EN"][data-test="ZH"]') as HTMLElement;
    const enZh = fullReport.cells.find((c) => c.edit_lang === 'EN' && c.test_lang === 'ZH')!;

    expect(cellFor().textContent).toBe(scorePercent(enZh.metrics.reliability!.em));
    const f1Button = [...dash.querySelectorAll('.measure-button')].find(
      (b) => b.textContent === 'F1',
    ) as HTMLButtonElement;
    f1Button.click();
    expect(f1Button.getAttribute('aria-pressed')).toBe('true');
    expect(cellFor().textContent).toBe(scorePercent(enZh.metrics.reliability!.f1));
    expect(fetchSpy).not.toHaveBeenCalled();
  });

  it('switches metrics from the held report', () => {
    const dash = renderDashboard(fullReport);
    const select = dash.querySelector('.metric-select') as HTMLSelectElement;
    select.value = 'portability';
    select.dispatchEvent(new Event('change'));
    const first = dash.querySelector('.heat-cell') as HTMLElement;
    expect(first.textContent).toBe(scorePercent(fullReport.cells[0]!.metrics.portability!.em));
  });

  it('drills into a cell and lists cases sorted by record_id', () => {
    const dash = renderDashboard(fullReport);
    const cell = dash.querySelector('.heat-cell[data-edit="DE"][data-test="TH"]') as HTMLElement;
    cell.click();
    const drill = dash.querySelector('.drilldown');
    expect(drill?.querySelector('h3')?.textContent).toContain('DE → TH');
    const ids = [...(drill?.querySelectorAll('.record-id') ?? [])].map((n) => n.textContent);
    expect(ids).toEqual([...ids].sort());
    expect(ids.length).toBe(2);
  });
});

describe('dashboard edge states', () => {
  it('renders a single-cell heatmap from a 1x1 report', () => {
    const dash = renderDashboard(tinyReport);
    const cells = dash.querySelectorAll('.heat-cell');
    expect(cells.length).toBe(1);
    expect(cells[0]!.textContent).toBe(
      scorePercent(tinyReport.cells[0]!.metrics.reliability!.em),
    );
  });

  it('shows the empty state without a report', () => {
    const dash = renderDashboard(null);
    expect(dash.querySelector('.empty-state')?.textContent).toContain('No report loaded');
    expect(dash.querySelector('.heatmap')).toBeNull();
  });
});

describe('score presentation', () => {
  it('maps service fractions onto the fixed 0-100 scale', () => {
    expect(scorePercent(1)).toBe('100.0');
    expect(scorePercent(0.681)).toBe('68.1');
    expect(scorePercent(0)).toBe('0.0');
    expect(scorePercent(null)).toBe('–');
  });

  it('clamps heat colors to the scale ends', () => {
    expect(heatColor(0)).toBe(heatColor(-50));
    expect(heatColor(100)).toBe(heatColor(250));
    expect(heatColor(0)).not.toBe(heatColor(100));
  });
});
