// Scripted end-to-end session against a live review service: create the
// canonical one-case batch, grade all 8 entities and 6 relations, flag one
// missing entity, apply derived verdicts, and check that the dashboard holds
// the /quality payload byte-for-byte.

import { spawn, type ChildProcess } from 'node:child_process';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ReviewApi } from '../src/api.js';
import { dashboardModel, renderQualityTable } from '../src/dashboard.js';
import { ReviewSession } from '../src/session.js';

const PORT = 8790 + (process.pid % 100);
const BASE = `http://127.0.0.1:${PORT}`;
const TOKEN = 'e2e-token';
const KG_DIR = fileURLToPath(new URL('./fixtures', import.meta.url));

let server: ChildProcess;

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const resp = await fetch(`${BASE}/v1/healthz`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error('review service did not come up');
}

beforeAll(async () => {
  server = spawn(
    'irackg',
    ['review-serve', '--kg-dir', KG_DIR, '--host', '127.0.0.1', '--port', String(PORT), '--token-env', 'REVIEW_TOKEN'],
    { env: { ...process.env, REVIEW_TOKEN: TOKEN }, stdio: 'ignore' },
  );
  await waitForHealth();
}, 30000);

afterAll(() => {
  server.kill();
});

describe('live review flow', () => {
  it('grades the whole fixture batch and mirrors /quality exactly', async () => {
    const api = new ReviewApi(BASE, TOKEN);
    const batch = await api.createBatch(1, 7);
    expect(batch.case_ids).toEqual(['fixture_a']);
    expect(batch.items).toBe(14); // 8 entities + 6 relations

    const session = new ReviewSession(api, 'sme1');
    await session.open(batch.batch_id);
    expect(session.items).toHaveLength(14);

    let entities = 0;
    let relations = 0;
    while (session.current() !== null) {
      const item = session.current()!;
      if (item.kind === 'entity') {
        const grade = item.target_id === 'R1' ? 'Poor' : 'Good';
        const result = await session.gradeEntity(grade);
        expect(result.ok).toBe(true);
        entities += 1;
      } else {
        const result = await session.gradeRelation('Pass');
        expect(result.ok).toBe(true);
        relations += 1;
      }
      expect(session.currentHasUnsaved()).toBe(false);
      if (!session.advance()) break;
    }
    expect(entities).toBe(8);
    expect(relations).toBe(6);
    expect(session.pending).toHaveLength(0);

    // client-side preview matches the rule: R1 is Poor, so the three
    // relations it touches will derive Fail
    expect(session.previewDerivedFails().sort()).toEqual(['REL3', 'REL5', 'REL6']);

    const flag = await session.flagMissing(
      'fixture_a',
      'MaterialFact',
      'the spill had been reported an hour earlier',
    );
    expect(flag.ok).toBe(true);

    const derived = await api.derive(batch.batch_id);
    expect(derived.changed).toBe(3);

    const dashboardRaw = await session.refreshDashboard();
    const direct = await api.qualityRaw(batch.batch_id);
    expect(dashboardRaw).toBe(direct); // byte-for-byte

    const model = dashboardModel(dashboardRaw);
    const rel = model.relationRow as { pass_pct: number; fail_pct: number; graded: number };
    expect(rel.graded).toBe(6);
    expect(rel.fail_pct).toBe(50); // 3 derived Fails over 6 graded
    const facts = model.entityRows.find((r) => r.kind === 'MaterialFact');
    expect(facts).toMatchObject({ graded: 2, missing_flags: 1 });
    const html = renderQualityTable(model);
    expect(html).toContain('2 graded / 1 missing flags');
  }, 30000);

  it('rejects labels without the bearer token', async () => {
    const anonymous = new ReviewApi(BASE);
    const result = await anonymous.postLabel({
      batch_id: 'b0001',
      case_id: 'fixture_a',
      kind: 'entity',
      target_id: 'F1',
      value: 'Good',
      reviewer: 'sneaky',
    });
    expect(result.ok).toBe(false);
    expect(result.status).toBe(401);
  });

  it('re-queues labels rejected by the service and recovers', async () => {
    const api = new ReviewApi(BASE, TOKEN);
    const batch = await api.createBatch(1, 7);
    const session = new ReviewSession(api, 'sme2');
    await session.open(batch.batch_id);

    // close the batch behind the session's back: grading now 409s
    const resp = await fetch(`${BASE}/v1/batches/${batch.batch_id}/close`, {
      method: 'POST',
      headers: { Authorization: `Bearer ${TOKEN}` },
    });
    expect(resp.ok).toBe(true);
    const result = await session.gradeEntity('Good');
    expect(result.ok).toBe(false);
    expect(result.status).toBe(409);
    expect(session.pending).toHaveLength(1); // flagged, not lost
    expect(session.advance()).toBe(false); // cursor pinned to the unsaved item
  }, 30000);
});
