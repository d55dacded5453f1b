import type {
  CascadeSummary,
  CaseSummary,
  PushMessage,
  Scalar,
  WireEvent,
  WorkItem,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

/** Thin typed client over the orchestration HTTP API and push channel. */
export class ApiClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, '') + path;
  }

  async listCases(): Promise<CaseSummary[]> {
    return expectJson(await fetch(this.url('/cases')));
  }

  async enabledWork(caseId: number): Promise<{ modelId: number; enabled: WorkItem[] }> {
    return expectJson(await fetch(this.url(`/cases/${caseId}/enabled`)));
  }

  async caseVariables(caseId: number): Promise<Record<string, Scalar>> {
    const body = await expectJson<{ variables: Record<string, Scalar> }>(
      await fetch(this.url(`/cases/${caseId}/variables`)),
    );
    return body.variables;
  }

  async deployModel(source: string, kind: string, bindings?: unknown): Promise<unknown> {
    return expectJson(
      await fetch(this.url('/models'), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ source, kind, bindings }),
      }),
    );
  }

  async startCase(modelId: number, payload: Record<string, Scalar>, ts?: number): Promise<CascadeSummary> {
    return expectJson(
      await fetch(this.url('/cases'), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ modelId, payload, ts }),
      }),
    );
  }

  /**
   * Post a task/event completion. The worklist can only ever produce
   * completed events; started and skipped are engine-emitted.
   */
  async submitCompletion(
    modelId: number,
    caseId: number,
    node: string,
    payload: Record<string, Scalar>,
    ts?: number,
  ): Promise<CascadeSummary> {
    const event: WireEvent = {
      pmID: modelId,
      caseID: caseId,
      nodeID: node,
      state: 'completed',
      payload,
      ts: ts ?? Date.now(),
    };
    return expectJson(
      await fetch(this.url('/events'), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(event),
      }),
    );
  }

  async exportLog(params: { model?: number; case?: number; format?: string } = {}): Promise<string> {
    const search = new URLSearchParams();
    if (params.model !== undefined) search.set('model', String(params.model));
    if (params.case !== undefined) search.set('case', String(params.case));
    if (params.format) search.set('format', params.format);
    const qs = search.toString();
    const response = await fetch(this.url('/log' + (qs ? `?${qs}` : '')));
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }

  /**
   * Long-lived push subscription: one wire-encoded record per message,
   * tagged with its stream name. Works over a plain streaming fetch so the
   * same code runs in the browser and under node-based tests.
   */
  async subscribe(
    onMessage: (message: PushMessage) => void,
    options: { fromOffset?: number; maxEvents?: number; signal?: AbortSignal } = {},
  ): Promise<void> {
    const search = new URLSearchParams();
    if (options.fromOffset !== undefined) search.set('from_offset', String(options.fromOffset));
    if (options.maxEvents !== undefined) search.set('max_events', String(options.maxEvents));
    const response = await fetch(this.url(`/subscribe?${search}`), {
      signal: options.signal,
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, 'push channel unavailable');
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    let eventName = 'message';
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let newline;
        while ((newline = buffer.indexOf('\n')) >= 0) {
          const line = buffer.slice(0, newline).replace(/\r$/, '');
          buffer = buffer.slice(newline + 1);
          if (line.startsWith('event: ')) {
            eventName = line.slice(7);
          } else if (line.startsWith('data: ')) {
            onMessage({ stream: eventName, record: JSON.parse(line.slice(6)) } as PushMessage);
          }
        }
      }
    } catch (error) {
      if ((error as Error).name !== 'AbortError') throw error;
    }
  }
}
