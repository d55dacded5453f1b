import type { WorklistStore } from './store.js';
import type { Scalar, WorkItem } from './types.js';

/**
 * DOM layer: renders the board from store state and wires user actions
 * back into the store. Rendering is a full rebuild per state change; the
 * board is small and determinism beats cleverness here.
 */
export class WorklistView {
  constructor(
    private readonly store: WorklistStore,
    private readonly root: HTMLElement,
  ) {
    store.subscribe(() => this.render());
    this.render();
  }

  render(): void {
    const state = this.store.getState();
    const doc = this.root.ownerDocument;
    this.root.textContent = '';

    const board = doc.createElement('section');
    board.className = 'case-board';
    const heading = doc.createElement('h2');
    heading.textContent = 'Cases';
    board.append(heading);
    const caseList = doc.createElement('ul');
    caseList.className = 'cases';
    for (const summary of state.cases) {
      const item = doc.createElement('li');
      const button = doc.createElement('button');
      button.className = 'case-select';
      button.dataset.caseId = String(summary.caseId);
      button.textContent = `model ${summary.modelId} v${summary.version} — case ${summary.caseId} (${summary.status})`;
      if (state.selected?.caseId === summary.caseId) button.classList.add('selected');
      button.addEventListener('click', () => {
        void this.store.selectCase(summary.caseId);
      });
      item.append(button);
      caseList.append(item);
    }
    board.append(caseList);
    this.root.append(board);

    if (state.error) {
      const error = doc.createElement('p');
      error.className = 'error';
      error.textContent = state.error;
      this.root.append(error);
    }

    if (state.selected) {
      const work = doc.createElement('section');
      work.className = 'worklist';
      const workHeading = doc.createElement('h2');
      workHeading.textContent = `Enabled work for case ${state.selected.caseId}`;
      work.append(workHeading);
      if (state.enabled.length === 0) {
        const none = doc.createElement('p');
        none.className = 'no-work';
        none.textContent = 'Nothing enabled.';
        work.append(none);
      }
      for (const item of state.enabled) {
        work.append(this.taskCard(doc, item, state.variables));
      }
      this.root.append(work);
    }

    const feed = doc.createElement('section');
    feed.className = 'live-feed';
    const feedHeading = doc.createElement('h2');
    feedHeading.textContent = 'Live feed';
    feed.append(feedHeading);
    const feedList = doc.createElement('ol');
    for (const entry of this.store.getState().feed) {
      const item = doc.createElement('li');
      const badge = doc.createElement('span');
      badge.className = `badge badge-${entry.state.replace(/[^a-z-]/g, '')}`;
      badge.textContent = entry.state;
      const text = doc.createElement('span');
      text.textContent = ` case ${entry.caseId} · ${entry.node}${entry.detail ? ` — ${entry.detail}` : ''}`;
      item.append(badge, text);
      feedList.append(item);
    }
    feed.append(feedList);
    this.root.append(feed);
  }

  private taskCard(
    doc: Document,
    item: WorkItem,
    variables: Record<string, Scalar>,
  ): HTMLElement {
    const card = doc.createElement('form');
    card.className = 'task-card';
    card.dataset.node = item.node;
    const title = doc.createElement('h3');
    title.textContent = `${item.node} (${item.kind})`;
    card.append(title);

    // Schemaless payload editor, prefilled with the current case variables.
    const rows = doc.createElement('div');
    rows.className = 'payload-rows';
    for (const [key, value] of Object.entries(variables)) {
      rows.append(this.payloadRow(doc, key, value));
    }
    card.append(rows);

    const addRow = doc.createElement('button');
    addRow.type = 'button';
    addRow.className = 'add-row';
    addRow.textContent = 'add field';
    addRow.addEventListener('click', () => rows.append(this.payloadRow(doc, '', '')));
    card.append(addRow);

    const submit = doc.createElement('button');
    submit.type = 'submit';
    submit.className = 'complete';
    submit.textContent = `Complete ${item.node}`;
    card.append(submit);

    card.addEventListener('submit', (event) => {
      event.preventDefault();
      const payload: Record<string, Scalar> = {};
      for (const row of Array.from(rows.querySelectorAll('.payload-row'))) {
        const key = (row.querySelector('.payload-key') as HTMLInputElement).value.trim();
        const raw = (row.querySelector('.payload-value') as HTMLInputElement).value;
        if (key) payload[key] = parseScalar(raw);
      }
      void this.store.completeTask(item.node, payload);
    });
    return card;
  }

  private payloadRow(doc: Document, key: string, value: Scalar): HTMLElement {
    const row = doc.createElement('div');
    row.className = 'payload-row';
    const keyInput = doc.createElement('input');
    keyInput.className = 'payload-key';
    keyInput.value = key;
    const valueInput = doc.createElement('input');
    valueInput.className = 'payload-value';
    valueInput.value = formatScalar(value);
    row.append(keyInput, valueInput);
    return row;
  }
}

export function parseScalar(raw: string): Scalar {
  if (raw === 'true') return true;
  if (raw === 'false') return false;
  if (raw !== '' && !Number.isNaN(Number(raw))) return Number(raw);
  return raw;
}

export function formatScalar(value: Scalar): string {
  if (typeof value === 'boolean') return value ? 'true' : 'false';
  return String(value);
}
