// DOM wiring: side-by-side layout with the opinion-derived item payload on
// the left and grading controls on the right. All state lives in
// ReviewSession; this file only reflects it into the page.

import { ReviewApi } from './api.js';
import { dashboardModel, renderQualityTable } from './dashboard.js';
import { KEY_TO_GRADE, ReviewSession } from './session.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

let session: ReviewSession | null = null;
let api: ReviewApi | null = null;

function renderItem(): void {
  if (session === null) return;
  const item = session.current();
  const panel = el<HTMLDivElement>('item-panel');
  const progress = el<HTMLSpanElement>('progress');
  progress.textContent = `${Math.min(session.cursor + 1, session.items.length)} / ${session.items.length}`;
  if (item === null) {
    panel.innerHTML = '<p class="done">Batch complete. Refresh the dashboard below.</p>';
    return;
  }
  const payload = Object.entries(item.payload)
    .map(([k, v]) => `<dt>${k}</dt><dd>${v}</dd>`)
    .join('');
  const preview = session.previewDerivedFails();
  const previewNote =
    item.kind === 'relation' && preview.includes(item.target_id)
      ? '<p class="derived-preview">Will derive Fail: an endpoint is graded Poor.</p>'
      : '';
  panel.innerHTML =
    `<h3>${item.kind}: ${item.target_id} <small>(${item.case_id})</small></h3>` +
    `<dl>${payload}</dl>${previewNote}`;
  el<HTMLDivElement>('entity-controls').style.display = item.kind === 'entity' ? 'block' : 'none';
  el<HTMLDivElement>('relation-controls').style.display =
    item.kind === 'relation' ? 'block' : 'none';
  el<HTMLDivElement>('record-controls').style.display =
    item.kind === 'sft_record' ? 'block' : 'none';
}

function renderPending(): void {
  if (session === null) return;
  const note = el<HTMLSpanElement>('pending-note');
  note.textContent = session.pending.length
    ? `${session.pending.length} unsaved label(s) buffered; they retry on Flush`
    : '';
}

async function afterLabel(ok: boolean): Promise<void> {
  if (session === null) return;
  if (ok) {
    session.advance();
  }
  renderItem();
  renderPending();
}

async function refreshDashboard(): Promise<void> {
  if (session === null) return;
  const raw = await session.refreshDashboard();
  el<HTMLDivElement>('dashboard').innerHTML = renderQualityTable(dashboardModel(raw));
}

async function connect(): Promise<void> {
  const base = el<HTMLInputElement>('base-url').value.replace(/\/$/, '');
  const token = el<HTMLInputElement>('token').value || undefined;
  const reviewer = el<HTMLInputElement>('reviewer').value || 'sme';
  api = new ReviewApi(base, token);
  session = new ReviewSession(api, reviewer);
  const batchField = el<HTMLInputElement>('batch-id').value.trim();
  let batchId = batchField;
  if (batchId === '') {
    const created = await api.createBatch(1, 7);
    batchId = created.batch_id;
    el<HTMLInputElement>('batch-id').value = batchId;
  }
  await session.open(batchId);
  el<HTMLDivElement>('review-root').style.display = 'grid';
  renderItem();
  renderPending();
  await refreshDashboard();
}

function bind(): void {
  el<HTMLButtonElement>('connect').addEventListener('click', () => void connect());
  for (const [key, grade] of Object.entries(KEY_TO_GRADE)) {
    el<HTMLButtonElement>(`grade-${grade.toLowerCase()}`).addEventListener('click', async () => {
      if (session === null) return;
      const result = await session.gradeEntityByKey(key);
      await afterLabel(result.ok);
    });
  }
  document.addEventListener('keydown', async (event) => {
    if (session === null || !(event.key in KEY_TO_GRADE)) return;
    const target = event.target as HTMLElement | null;
    if (target !== null && (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA')) return;
    const item = session.current();
    if (item === null || item.kind !== 'entity') return;
    const result = await session.gradeEntityByKey(event.key);
    await afterLabel(result.ok);
  });
  for (const verdict of ['Pass', 'Fail'] as const) {
    el<HTMLButtonElement>(`verdict-${verdict.toLowerCase()}`).addEventListener(
      'click',
      async () => {
        if (session === null) return;
        const result = await session.gradeRelation(verdict);
        await afterLabel(result.ok);
      },
    );
  }
  for (const grade of ['Correct', 'CorrectMinor', 'Wrong'] as const) {
    el<HTMLButtonElement>(`record-${grade.toLowerCase()}`).addEventListener('click', async () => {
      if (session === null) return;
      const result = await session.gradeRecord(grade);
      await afterLabel(result.ok);
    });
  }
  el<HTMLButtonElement>('flag-missing').addEventListener('click', async () => {
    if (session === null) return;
    const item = session.current();
    const caseId = item !== null ? item.case_id : session.items[0]?.case_id ?? '';
    const kind = el<HTMLSelectElement>('missing-kind').value;
    const span = el<HTMLTextAreaElement>('missing-span').value;
    const result = await session.flagMissing(caseId, kind, span);
    el<HTMLSpanElement>('missing-note').textContent = result.ok
      ? 'Missing entity flagged.'
      : `Rejected: ${result.detail ?? 'error'}`;
    renderPending();
  });
  el<HTMLButtonElement>('flush').addEventListener('click', async () => {
    if (session === null) return;
    await session.flush();
    renderItem();
    renderPending();
  });
  el<HTMLButtonElement>('derive').addEventListener('click', async () => {
    if (api === null || session === null) return;
    await api.derive(session.batchId);
    await refreshDashboard();
  });
  el<HTMLButtonElement>('refresh-dashboard').addEventListener(
    'click',
    () => void refreshDashboard(),
  );
}

document.addEventListener('DOMContentLoaded', bind);
