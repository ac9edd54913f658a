// Client-side review session: cursor over batch items, an offline-tolerant
// pending-label buffer, optimistic grade state with rollback, and a local
// preview of the server's Poor-endpoint -> Fail derivation rule.

import type { LabelBody, MissingFlagValue, PostResult, ReviewApi, ReviewItem } from './api.js';

export type EntityGrade = 'Good' | 'Acceptable' | 'Poor';
export type RelationVerdict = 'Pass' | 'Fail';

export const KEY_TO_GRADE: Record<string, EntityGrade> = {
  '1': 'Good',
  '2': 'Acceptable',
  '3': 'Poor',
};

export interface PendingLabel {
  body: LabelBody;
  lastError?: string;
}

function itemKey(caseId: string, kind: string, targetId: string): string {
  return `${caseId}/${kind}/${targetId}`;
}

export class ReviewSession {
  batchId = '';
  items: ReviewItem[] = [];
  cursor = 0;
  pending: PendingLabel[] = [];
  saved = new Map<string, string | MissingFlagValue>();
  entityGrades = new Map<string, EntityGrade>(); // case/target -> grade, feeds the preview
  dashboardRaw = '';

  constructor(private api: ReviewApi, public reviewer: string) {}

  async open(batchId: string): Promise<void> {
    this.batchId = batchId;
    this.items = await this.api.allItems(batchId);
    this.cursor = 0;
  }

  current(): ReviewItem | null {
    return this.items[this.cursor] ?? null;
  }

  currentHasUnsaved(): boolean {
    const item = this.current();
    if (item === null) return false;
    const key = itemKey(item.case_id, item.kind, item.target_id);
    return this.pending.some(
      (p) => itemKey(p.body.case_id, p.body.kind, p.body.target_id) === key,
    );
  }

  // The cursor may not advance past an item whose label is still buffered;
  // callers must flush (or the flush must succeed) first.
  advance(): boolean {
    if (this.currentHasUnsaved()) return false;
    if (this.cursor >= this.items.length) return false;
    this.cursor += 1;
    return true;
  }

  private async submit(body: LabelBody): Promise<PostResult> {
    const key = itemKey(body.case_id, body.kind, body.target_id);
    const previous = this.saved.get(key);
    this.saved.set(key, body.value); // optimistic
    const entry: PendingLabel = { body };
    this.pending.push(entry);
    const result = await this.api.postLabel(body);
    if (result.ok) {
      this.pending = this.pending.filter((p) => p !== entry);
    } else {
      // roll back the optimistic state; the entry stays queued for retry
      if (previous === undefined) this.saved.delete(key);
      else this.saved.set(key, previous);
      entry.lastError = result.detail ?? `status ${result.status}`;
    }
    return result;
  }

  async gradeEntityByKey(key: string): Promise<PostResult> {
    const grade = KEY_TO_GRADE[key];
    if (grade === undefined) return { ok: false, status: 0, detail: `no grade bound to ${key}` };
    return this.gradeEntity(grade);
  }

  async gradeEntity(grade: EntityGrade): Promise<PostResult> {
    const item = this.current();
    if (item === null || item.kind !== 'entity') {
      return { ok: false, status: 0, detail: 'current item is not an entity' };
    }
    const result = await this.submit({
      batch_id: this.batchId,
      case_id: item.case_id,
      kind: 'entity',
      target_id: item.target_id,
      value: grade,
      reviewer: this.reviewer,
    });
    if (result.ok) this.entityGrades.set(itemKey(item.case_id, 'entity', item.target_id), grade);
    return result;
  }

  async gradeRelation(verdict: RelationVerdict): Promise<PostResult> {
    const item = this.current();
    if (item === null || item.kind !== 'relation') {
      return { ok: false, status: 0, detail: 'current item is not a relation' };
    }
    return this.submit({
      batch_id: this.batchId,
      case_id: item.case_id,
      kind: 'relation',
      target_id: item.target_id,
      value: verdict,
      reviewer: this.reviewer,
    });
  }

  async gradeRecord(grade: 'Correct' | 'CorrectMinor' | 'Wrong'): Promise<PostResult> {
    const item = this.current();
    if (item === null || item.kind !== 'sft_record') {
      return { ok: false, status: 0, detail: 'current item is not a generated record' };
    }
    return this.submit({
      batch_id: this.batchId,
      case_id: item.case_id,
      kind: 'sft_record',
      target_id: item.target_id,
      value: grade,
      reviewer: this.reviewer,
    });
  }

  // Missing-entity flags are validated client-side before any request goes out.
  async flagMissing(caseId: string, entityKind: string, span: string): Promise<PostResult> {
    if (span.trim() === '') {
      return { ok: false, status: 0, detail: 'span must be non-empty' };
    }
    return this.submit({
      batch_id: this.batchId,
      case_id: caseId,
      kind: 'missing_flag',
      target_id: `span-${this.saved.size}-${span.length}`,
      value: { entity_kind: entityKind, span },
      reviewer: this.reviewer,
    });
  }

  // Retry everything still buffered (e.g. after a dropped connection).
  async flush(): Promise<number> {
    const queued = this.pending;
    this.pending = [];
    let failures = 0;
    for (const entry of queued) {
      const result = await this.submit(entry.body);
      if (!result.ok) failures += 1;
    }
    return failures;
  }

  // Local mirror of the service's rule: relations with a Poor-graded endpoint
  // will derive Fail. Preview only; the server stays authoritative.
  previewDerivedFails(): string[] {
    const fails: string[] = [];
    for (const item of this.items) {
      if (item.kind !== 'relation') continue;
      const endpoints = [item.payload['from'] ?? '', item.payload['to'] ?? ''];
      const poor = endpoints.some(
        (ep) => ep !== '' && this.entityGrades.get(itemKey(item.case_id, 'entity', ep)) === 'Poor',
      );
      if (poor) fails.push(item.target_id);
    }
    return fails;
  }

  async refreshDashboard(): Promise<string> {
    this.dashboardRaw = await this.api.qualityRaw(this.batchId);
    return this.dashboardRaw;
  }
}
