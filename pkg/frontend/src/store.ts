import { ApiClient, ApiError } from './api.js';
import type { CaseSummary, Diagnostic, PushMessage, Scalar, WireEvent, WorkItem } from './types.js';

export type FeedEntry = {
  stream: string;
  node: string;
  state: string;
  caseId: number;
  detail?: string;
  ts: number;
};

export type WorklistState = {
  cases: CaseSummary[];
  selected: { modelId: number; caseId: number } | null;
  enabled: WorkItem[];
  variables: Record<string, Scalar>;
  feed: FeedEntry[];
  error: string | null;
  submitting: boolean;
};

type Listener = (state: WorklistState) => void;

/**
 * Single source of truth for the board. State derives exclusively from API
 * responses and push messages: a hard refresh rebuilds the same view, and
 * nothing is rendered optimistically ahead of server confirmation.
 */
export class WorklistStore {
  private state: WorklistState = {
    cases: [],
    selected: null,
    enabled: [],
    variables: {},
    feed: [],
    error: null,
    submitting: false,
  };
  private listeners = new Set<Listener>();
  private refreshChain: Promise<void> = Promise.resolve();

  constructor(readonly api: ApiClient) {}

  getState(): WorklistState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(partial: Partial<WorklistState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  async refreshBoard(): Promise<void> {
    const cases = await this.api.listCases();
    this.update({ cases });
    if (this.state.selected) {
      const stillThere = cases.some((c) => c.caseId === this.state.selected!.caseId);
      if (!stillThere) this.update({ selected: null, enabled: [], variables: {} });
    }
  }

  async selectCase(caseId: number): Promise<void> {
    const summary = this.state.cases.find((c) => c.caseId === caseId);
    if (!summary) return;
    const [work, variables] = await Promise.all([
      this.api.enabledWork(caseId),
      this.api.caseVariables(caseId),
    ]);
    this.update({
      selected: { modelId: summary.modelId, caseId },
      enabled: work.enabled,
      variables,
      error: null,
    });
  }

  /** Post a completion with the form values as the event payload. */
  async completeTask(node: string, values: Record<string, Scalar>, ts?: number): Promise<boolean> {
    const selected = this.state.selected;
    if (!selected) return false;
    if (!this.state.enabled.some((w) => w.node === node)) {
      this.update({ error: `task ${node} is no longer available` });
      return false;
    }
    this.update({ submitting: true, error: null });
    try {
      await this.api.submitCompletion(selected.modelId, selected.caseId, node, values, ts);
      // no optimistic update: the push channel delivers what happened and
      // the refresh below re-reads the server's view
      await this.refreshSelected();
      await this.refreshBoard();
      return true;
    } catch (error) {
      if (error instanceof ApiError) {
        const gone = error.status === 400 && /not currently offered|no longer/.test(error.message);
        this.update({ error: gone ? `task ${node} is no longer available` : error.message });
        await this.refreshSelected();
        return false;
      }
      throw error;
    } finally {
      this.update({ submitting: false });
    }
  }

  private async refreshSelected(): Promise<void> {
    const selected = this.state.selected;
    if (!selected) return;
    try {
      const [work, variables] = await Promise.all([
        this.api.enabledWork(selected.caseId),
        this.api.caseVariables(selected.caseId),
      ]);
      if (this.state.selected?.caseId === selected.caseId) {
        this.update({ enabled: work.enabled, variables });
      }
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
    }
  }

  /** Push messages apply strictly in arrival order. */
  applyPush(message: PushMessage): void {
    if (message.stream === 'Diagnostics') {
      const record = message.record as Diagnostic;
      this.update({
        feed: [
          ...this.state.feed,
          {
            stream: message.stream,
            node: record.nodeID,
            state: record.kind,
            caseId: record.caseID,
            detail: record.detail,
            ts: record.ts,
          },
        ],
      });
      return;
    }
    const record = message.record as WireEvent;
    this.update({
      feed: [
        ...this.state.feed,
        {
          stream: message.stream,
          node: record.nodeID,
          state: record.state,
          caseId: record.caseID,
          ts: record.ts,
        },
      ],
    });
    if (this.state.selected && record.caseID === this.state.selected.caseId) {
      // serialize refreshes so later pushes never lose to earlier fetches
      this.refreshChain = this.refreshChain.then(() => this.refreshSelected());
    }
  }

  connect(options: { signal?: AbortSignal; maxEvents?: number; fromOffset?: number } = {}): Promise<void> {
    return this.api.subscribe((message) => this.applyPush(message), options);
  }

  /** Wait for in-flight push-triggered refreshes to settle (test hook). */
  async idle(): Promise<void> {
    await this.refreshChain;
  }
}
