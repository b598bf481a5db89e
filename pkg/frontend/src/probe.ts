import { el, formatMs, probabilityLabel } from './format';
import type { QueryResponse } from './types';

export interface ProbeContext {
  text: string;
  lang: string;
}

/** Render one probe exactly as the service answered it: the retrieval
 * decision (a fact, or "none" on the green path), the prompt the model saw,
 * both answers, and per-stage latency. */
export function renderProbeView(ctx: ProbeContext, result: QueryResponse): HTMLElement {
  const root = el('article', 'probe-view');

  const header = el('header', 'probe-query');
  header.append(
    el('span', 'lang-badge', ctx.lang),
    el('span', 'query-text', ctx.text),
    el('span', 'mode-tag', result.mode),
  );
  root.append(header);

  const retrieval = el('section');
  if (result.retrieved === null) {
    retrieval.className = 'retrieval green-path';
    retrieval.append(
      el('strong', undefined, 'Retrieved: none'),
      el('span', undefined, ' — unrelated query, passed through unchanged'),
    );
  } else {
    const fact = result.retrieved;
    retrieval.className = 'retrieval hit';
    const line = el('div', 'fact-line');
    line.append(
      el('strong', undefined, `Retrieved: ${fact.id}`),
      el('span', 'lang-badge', fact.lang),
      el('span', 'fact-probability', probabilityLabel(fact.probability)),
    );
    retrieval.append(
      line,
      el('div', 'fact-question', fact.question),
      el('div', 'fact-answer', fact.answer),
    );
  }
  root.append(retrieval);

  const prompt = el('section', 'prompt-block');
  prompt.append(el('h3', undefined, 'Prompt'));
  const pre = el('pre', 'prompt-text');
  pre.textContent = result.prompt;
  prompt.append(pre);
  root.append(prompt);

  const answers = el('section', 'answers');
  const preEdit = el('div', 'answer pre-edit');
  preEdit.append(el('label', undefined, 'pre-edit'), el('output', undefined, result.pre_edit_answer));
  const postEdit = el('div', 'answer post-edit');
  postEdit.append(el('label', undefined, 'post-edit'), el('output', undefined, result.answer));
  answers.append(preEdit, postEdit);
  root.append(answers);

  root.append(
    el(
      'footer',
      'latency',
      `retrieval ${formatMs(result.latency.retrieval_ms)} · generation ${formatMs(result.latency.generation_ms)}`,
    ),
  );
  return root;
}
