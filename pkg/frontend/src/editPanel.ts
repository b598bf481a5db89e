import { LatestGate, type ApiClient } from './api';
import { el } from './format';
import { renderProbeView } from './probe';

function inlineError(container: HTMLElement, message: string, retry: () => void): void {
  const box = el('div', 'inline-error');
  box.append(el('span', undefined, message));
  const button = el('button', 'retry-button', 'Retry');
  button.type = 'button';
  button.addEventListener('click', () => {
    box.remove();
    retry();
  });
  box.append(button);
  container.prepend(box);
}

function langSelect(languages: string[], className: string): HTMLSelectElement {
  const select = el('select', className);
  for (const code of languages) {
    const option = el('option', undefined, code);
    option.value = code;
    select.append(option);
  }
  return select;
}

/** The edit-probe loop: submit a fact, probe it in any language, inspect the
 * retrieval and prompt, revise or delete, probe again. */
export function renderEditPanel(api: ApiClient, languages: string[]): HTMLElement {
  const root = el('div', 'edit-panel');
  const gate = new LatestGate();

  // fact form
  const factForm = el('form', 'fact-form');
  const factLang = langSelect(languages, 'fact-lang');
  const question = el('input', 'fact-question') as HTMLInputElement;
  question.placeholder = 'Question';
  const answer = el('input', 'fact-answer') as HTMLInputElement;
  answer.placeholder = 'New answer';
  const saveButton = el('button', 'save-fact', 'Save fact');
  saveButton.type = 'submit';
  factForm.append(factLang, question, answer, saveButton);

  const factsList = el('ul', 'facts-list');

  async function refreshFacts(): Promise<void> {
    const facts = await api.listFacts();
    factsList.replaceChildren();
    for (const fact of facts) {
      const item = el('li', 'fact-item');
      item.append(
        el('span', 'lang-badge', fact.lang),
        el('span', 'fact-question', fact.question),
        el('span', 'fact-answer', fact.answer),
      );
      const remove = el('button', 'delete-fact', 'Delete');
      remove.type = 'button';
      remove.addEventListener('click', () => {
        void api
          .deleteFact(fact.id)
          .then(refreshFacts)
          .catch((error: Error) =>
            inlineError(root, `delete failed: ${error.message}`, () => remove.click()),
          );
      });
      item.append(remove);
      factsList.append(item);
    }
  }

  factForm.addEventListener('submit', (event) => {
    event.preventDefault();
    const submit = () =>
      void api
        .addFact({ lang: factLang.value, question: question.value, answer: answer.value })
        .then(refreshFacts)
        .catch((error: Error) => inlineError(root, `save failed: ${error.message}`, submit));
    submit();
  });

  // probe form
  const probeForm = el('form', 'probe-form');
  const probeLang = langSelect(languages, 'probe-lang');
  const probeText = el('input', 'probe-text') as HTMLInputElement;
  probeText.placeholder = 'Probe question, any language';
  const probeButton = el('button', 'run-probe', 'Probe');
  probeButton.type = 'submit';
  probeForm.append(probeLang, probeText, probeButton);

  const probeResults = el('div', 'probe-results');

  probeForm.addEventListener('submit', (event) => {
    event.preventDefault();
    const text = probeText.value;
    const lang = probeLang.value;
    const ticket = gate.next();
    const run = () =>
      void api
        .query({ text, test_lang: lang })
        .then((result) => {
          // a newer probe may have landed first; never overwrite it
          if (!gate.isCurrent(ticket)) return;
          probeResults.prepend(renderProbeView({ text, lang }, result));
        })
        .catch((error: Error) => {
          if (!gate.isCurrent(ticket)) return;
          inlineError(root, `probe failed: ${error.message}`, run);
        });
    run();
  });

  root.append(
    el('h2', undefined, 'Edit'),
    factForm,
    factsList,
    el('h2', undefined, 'Probe'),
    probeForm,
    probeResults,
  );
  void refreshFacts().catch((error: Error) =>
    inlineError(root, `cannot load facts: ${error.message}`, () => void refreshFacts()),
  );
  return root;
}
