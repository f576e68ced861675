// Ranked-correlation table model. Rows are taken verbatim from the
// service's /v1/compare response; the table never recomputes r, slope,
// or intercept client-side, so it is equal by construction to the CLI's
// ranking output for the same inputs (both serialize the same service
// values). rowsToCsv reproduces the service's ranking_csv byte for byte
// as a self-check.

import type { CompareResponse, RankingEntry } from "./api.js";

export interface RankingRow {
  rank: number;
  recordId: string;
  r: number;
  slope: number;
  intercept: number;
  label: string;
}

function describeRecord(entry: RankingEntry): string {
  const rec = entry.record;
  const isotope = rec.isotope ?? "e";
  const b0mT = rec.b0_T * 1e3;
  const family = rec.family_id ? ` fam=${rec.family_id}` : "";
  return (
    `${isotope} ${Number(b0mT.toPrecision(6))}mT theta=${rec.theta_deg}` +
    ` M=${rec.m} ${rec.transition}${family}`
  );
}

export function rankingRows(response: CompareResponse): RankingRow[] {
  return response.ranking.map((entry) => ({
    rank: entry.rank,
    recordId: entry.record.record_id,
    r: entry.r,
    slope: entry.slope,
    intercept: entry.intercept,
    label: describeRecord(entry),
  }));
}

// repr-style float text matching the service CSV (shortest round-trip
// form; integers keep a trailing .0)
function floatRepr(value: number): string {
  if (Number.isInteger(value) && Math.abs(value) < 1e16) return `${value}.0`;
  const text = String(value);
  // JS prints exponents as "1e-7"; python repr uses "1e-07"
  return text.replace(/e([+-])(\d)$/, "e$10$2");
}

export function rowsToCsv(rows: RankingRow[]): string {
  const lines = ["rank,record_id,r,slope,intercept"];
  for (const row of rows) {
    lines.push(
      `${row.rank},${row.recordId},${floatRepr(row.r)},` +
        `${floatRepr(row.slope)},${floatRepr(row.intercept)}`,
    );
  }
  return lines.join("\n") + "\n";
}

export function parseRankingCsv(text: string): RankingRow[] {
  const lines = text.trim().split("\n");
  if (lines[0] !== "rank,record_id,r,slope,intercept") {
    throw new Error(`unexpected ranking header: ${lines[0]}`);
  }
  return lines.slice(1).map((line) => {
    const [rank, recordId, r, slope, intercept] = line.split(",");
    return {
      rank: Number(rank),
      recordId: recordId ?? "",
      r: Number(r),
      slope: Number(slope),
      intercept: Number(intercept),
      label: "",
    };
  });
}
