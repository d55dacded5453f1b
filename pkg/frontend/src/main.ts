import { ApiClient } from './api.js';
import { WorklistStore } from './store.js';
import { WorklistView } from './view.js';

const base = (window as { CASEFLOW_BASE?: string }).CASEFLOW_BASE ?? '';
const store = new WorklistStore(new ApiClient(base || window.location.origin));
const root = document.getElementById('app');
if (!root) throw new Error('missing #app element');
new WorklistView(store, root);
void store.refreshBoard();
void store.connect();
