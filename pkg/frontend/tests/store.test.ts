import { describe, expect, it } from 'vitest';

import { ApiError } from '../src/api.js';
import { WorklistStore } from '../src/store.js';
import { FakeApi } from './fake-api.js';

function runningCase(caseId: number, modelId = 3) {
  return {
    modelId,
    caseId,
    version: 1,
    status: 'running' as const,
    createdTs: 0,
    closedTs: null,
  };
}

describe('worklist store', () => {
  it('lists cases and shows enabled work on selection', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1), runningCase(2)];
    api.enabled.set(1, [{ node: 'Upload document', kind: 'event' }]);
    api.variables.set(1, { caseLocked: false });
    const store = new WorklistStore(api);
    await store.refreshBoard();
    expect(store.getState().cases).toHaveLength(2);
    await store.selectCase(1);
    expect(store.getState().selected).toEqual({ modelId: 3, caseId: 1 });
    expect(store.getState().enabled.map((w) => w.node)).toEqual(['Upload document']);
    expect(store.getState().variables).toEqual({ caseLocked: false });
  });

  it('submits completions with the form values and refreshes from the server', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1)];
    api.enabled.set(1, [{ node: 'T', kind: 'task' }]);
    const store = new WorklistStore(api);
    await store.refreshBoard();
    await store.selectCase(1);
    const ok = await store.completeTask('T', { answer: 42 });
    expect(ok).toBe(true);
    expect(api.submissions).toEqual([{ caseId: 1, node: 'T', payload: { answer: 42 } }]);
    expect(store.getState().enabled).toEqual([]); // server truth, not optimism
  });

  it('cannot submit work that is not offered', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1)];
    api.enabled.set(1, []);
    const store = new WorklistStore(api);
    await store.refreshBoard();
    await store.selectCase(1);
    const ok = await store.completeTask('ghost', {});
    expect(ok).toBe(false);
    expect(api.submissions).toEqual([]);
    expect(store.getState().error).toMatch(/no longer available/);
  });

  it('surfaces a stale-offer race as task-no-longer-available', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1)];
    api.enabled.set(1, [{ node: 'T', kind: 'task' }]);
    const store = new WorklistStore(api);
    await store.refreshBoard();
    await store.selectCase(1);
    api.failNextSubmit = new ApiError(400, "task 'T' is not currently offered");
    const ok = await store.completeTask('T', {});
    expect(ok).toBe(false);
    expect(store.getState().error).toBe('task T is no longer available');
  });

  it('surfaces other API errors inline', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1)];
    api.enabled.set(1, [{ node: 'T', kind: 'task' }]);
    const store = new WorklistStore(api);
    await store.refreshBoard();
    await store.selectCase(1);
    api.failNextSubmit = new ApiError(409, 'timestamp 5 is older than the last event');
    await store.completeTask('T', {});
    expect(store.getState().error).toMatch(/older/);
  });

  it('applies push messages in arrival order and refreshes the selected case', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1)];
    api.enabled.set(1, [{ node: 'A', kind: 'task' }]);
    const store = new WorklistStore(api);
    await store.refreshBoard();
    await store.selectCase(1);
    api.enabled.set(1, [{ node: 'B', kind: 'task' }]);
    store.applyPush({
      stream: 'Process_Event',
      record: { pmID: 3, caseID: 1, nodeID: 'A', state: 'completed', payload: {}, ts: 7 },
    });
    store.applyPush({
      stream: 'Diagnostics',
      record: { kind: 'dcr-rejected', pmID: 3, caseID: 1, nodeID: 'X', detail: 'nope', ts: 8 },
    });
    await store.idle();
    expect(store.getState().feed.map((f) => f.state)).toEqual(['completed', 'dcr-rejected']);
    expect(store.getState().enabled.map((w) => w.node)).toEqual(['B']);
  });

  it('reconstructs the identical board from a hard refresh', async () => {
    const api = new FakeApi();
    api.cases = [runningCase(1), runningCase(4)];
    api.enabled.set(4, [{ node: 'D', kind: 'event' }]);
    api.variables.set(4, { go: true });
    const first = new WorklistStore(api);
    await first.refreshBoard();
    await first.selectCase(4);
    const second = new WorklistStore(api);
    await second.refreshBoard();
    await second.selectCase(4);
    const strip = (s: typeof first) => {
      const { feed: _feed, ...rest } = s.getState();
      return rest;
    };
    expect(strip(second)).toEqual(strip(first));
  });
});
