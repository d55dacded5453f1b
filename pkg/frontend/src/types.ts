export type Scalar = boolean | number | string;

export type WireEvent = {
  pmID: number;
  caseID: number;
  nodeID: string;
  state: 'started' | 'completed' | 'skipped';
  payload: Record<string, Scalar>;
  ts: number;
};

export type Diagnostic = {
  kind: string;
  pmID: number;
  caseID: number;
  nodeID: string;
  detail: string;
  ts: number;
};

export type CaseSummary = {
  modelId: number;
  caseId: number;
  version: number;
  status: 'running' | 'completed' | 'faulted';
  createdTs: number;
  closedTs: number | null;
};

export type WorkItem = {
  node: string;
  kind: 'task' | 'event';
};

export type CascadeSummary = {
  events: WireEvent[];
  diagnostics: Diagnostic[];
  fault: Diagnostic | null;
  caseStatus: string;
  caseId?: number;
};

export type PushMessage =
  | { stream: 'Process_Event'; record: WireEvent }
  | { stream: 'Diagnostics'; record: Diagnostic }
  | { stream: string; record: Record<string, unknown> };
