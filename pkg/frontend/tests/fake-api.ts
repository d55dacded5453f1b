import { ApiClient, ApiError } from '../src/api.js';
import type { CascadeSummary, CaseSummary, Scalar, WorkItem } from '../src/types.js';

/** Scripted in-memory stand-in for the HTTP API. */
export class FakeApi extends ApiClient {
  cases: CaseSummary[] = [];
  enabled = new Map<number, WorkItem[]>();
  variables = new Map<number, Record<string, Scalar>>();
  submissions: Array<{ caseId: number; node: string; payload: Record<string, Scalar> }> = [];
  failNextSubmit: ApiError | null = null;

  constructor() {
    super('http://fake');
  }

  override async listCases(): Promise<CaseSummary[]> {
    return [...this.cases];
  }

  override async enabledWork(caseId: number): Promise<{ modelId: number; enabled: WorkItem[] }> {
    const summary = this.cases.find((c) => c.caseId === caseId);
    if (!summary) throw new ApiError(404, `unknown case ${caseId}`);
    return { modelId: summary.modelId, enabled: this.enabled.get(caseId) ?? [] };
  }

  override async caseVariables(caseId: number): Promise<Record<string, Scalar>> {
    return { ...(this.variables.get(caseId) ?? {}) };
  }

  override async submitCompletion(
    _modelId: number,
    caseId: number,
    node: string,
    payload: Record<string, Scalar>,
  ): Promise<CascadeSummary> {
    if (this.failNextSubmit) {
      const error = this.failNextSubmit;
      this.failNextSubmit = null;
      throw error;
    }
    this.submissions.push({ caseId, node, payload });
    const remaining = (this.enabled.get(caseId) ?? []).filter((w) => w.node !== node);
    this.enabled.set(caseId, remaining);
    return { events: [], diagnostics: [], fault: null, caseStatus: 'running' };
  }
}
