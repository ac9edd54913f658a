// Quality dashboard: a pure mapping from the /quality payload to table rows.
// Raw response text is kept on the model so callers can diff it against the
// API byte-for-byte; no percentage is computed client-side.

export interface EntityRow {
  kind: string;
  good_pct: number | null;
  acceptable_pct: number | null;
  poor_pct: number | null;
  missing_pct: number | null;
  graded: number;
  missing_flags: number;
}

export interface RelationRow {
  pass_pct: number | null;
  fail_pct: number | null;
  graded: number;
}

export interface DashboardModel {
  batchId: string;
  raw: string;
  entityRows: Array<EntityRow | { kind: string; na: true }>;
  relationRow: RelationRow | { na: true };
}

interface QualityPayload {
  batch_id: string;
  entities: Record<string, 'n/a' | Omit<EntityRow, 'kind'>>;
  relations: 'n/a' | RelationRow;
}

export function dashboardModel(rawQualityJson: string): DashboardModel {
  const payload = JSON.parse(rawQualityJson) as QualityPayload;
  const entityRows = Object.entries(payload.entities).map(([kind, row]) =>
    row === 'n/a' ? { kind, na: true as const } : { kind, ...row },
  );
  return {
    batchId: payload.batch_id,
    raw: rawQualityJson,
    entityRows,
    relationRow: payload.relations === 'n/a' ? { na: true } : payload.relations,
  };
}

function pct(value: number | null): string {
  return value === null ? 'n/a' : `${value}%`;
}

export function renderQualityTable(model: DashboardModel): string {
  const rows = model.entityRows
    .map((row) => {
      if ('na' in row) {
        return `<tr><td>${row.kind}</td><td colspan="5">n/a</td></tr>`;
      }
      return (
        `<tr><td>${row.kind}</td>` +
        `<td>${pct(row.good_pct)}</td><td>${pct(row.acceptable_pct)}</td>` +
        `<td>${pct(row.poor_pct)}</td><td>${pct(row.missing_pct)}</td>` +
        `<td>${row.graded} graded / ${row.missing_flags} missing flags</td></tr>`
      );
    })
    .join('');
  const relation =
    'na' in model.relationRow
      ? '<tr><td>Relations</td><td colspan="5">n/a</td></tr>'
      : `<tr><td>Relations</td><td>Pass ${pct(model.relationRow.pass_pct)}</td>` +
        `<td>Fail ${pct(model.relationRow.fail_pct)}</td><td></td><td></td>` +
        `<td>${model.relationRow.graded} graded</td></tr>`;
  return (
    `<table class="quality"><thead><tr>` +
    `<th>Kind</th><th>Good</th><th>Acceptable</th><th>Poor</th><th>Missing</th><th>Denominators</th>` +
    `</tr></thead><tbody>${rows}${relation}</tbody></table>`
  );
}
