// Client-side trace CSV validation for the upload panel. Mirrors the
// service's ingestion contract: 1-based line numbers over the raw file,
// blank and # comment lines ignored, header of exactly (tau_us|t_us,
// p|counts), >= 8 data rows, strictly increasing x. Malformed rows are
// skipped and reported by line number so the user can fix the file; the
// actual ranking still comes from the service, which applies the same
// rules.

export const X_COLUMNS = ["tau_us", "t_us"] as const;
export const Y_COLUMNS = ["p", "counts"] as const;

export interface ParsedTrace {
  x: number[];
  p: number[];
  kind: "simulated" | "experimental";
  xColumn: string;
  skippedLines: number[];
}

export class TraceFormatError extends Error {
  constructor(message: string, public line?: number) {
    super(line === undefined ? message : `line ${line}: ${message}`);
  }
}

function parseCell(cell: string): number {
  const text = cell.trim();
  // Number("") is 0 and Number misreads some python-float spellings;
  // require a plain finite decimal/scientific literal
  if (!/^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$/.test(text)) return NaN;
  return Number(text);
}

export function parseTraceCsv(text: string): ParsedTrace {
  let header: string[] | null = null;
  const xs: number[] = [];
  const ps: number[] = [];
  const skipped: number[] = [];
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const lineno = i + 1;
    const line = (lines[i] ?? "").trim();
    if (!line || line.startsWith("#")) continue;
    if (header === null) {
      header = line.split(",").map((c) => c.trim());
      const [xCol, yCol] = [header[0] ?? "", header[1] ?? ""];
      if (
        header.length !== 2 ||
        !(X_COLUMNS as readonly string[]).includes(xCol) ||
        !(Y_COLUMNS as readonly string[]).includes(yCol)
      ) {
        throw new TraceFormatError(
          `header must be one of [${X_COLUMNS}] then one of [${Y_COLUMNS}], got "${line}"`,
          lineno,
        );
      }
      continue;
    }
    const cells = line.split(",");
    if (cells.length !== 2) {
      skipped.push(lineno);
      continue;
    }
    const x = parseCell(cells[0] ?? "");
    const p = parseCell(cells[1] ?? "");
    if (!Number.isFinite(x) || !Number.isFinite(p)) {
      skipped.push(lineno);
      continue;
    }
    xs.push(x);
    ps.push(p);
  }
  if (header === null) throw new TraceFormatError("no header line found");
  if (xs.length < 8) {
    throw new TraceFormatError(`too few data rows (${xs.length}); need >= 8`);
  }
  for (let i = 1; i < xs.length; i++) {
    if ((xs[i] as number) <= (xs[i - 1] as number)) {
      throw new TraceFormatError(
        `x values must increase strictly; violation at data row ${i + 1}`,
      );
    }
  }
  return {
    x: xs,
    p: ps,
    kind: header[1] === "p" ? "simulated" : "experimental",
    xColumn: header[0] ?? "tau_us",
    skippedLines: skipped,
  };
}

// one-line summary for the upload panel
export function describeTrace(trace: ParsedTrace): string {
  const n = trace.x.length;
  const first = trace.x[0] as number;
  const last = trace.x[n - 1] as number;
  const range = `${first.toPrecision(4)}..${last.toPrecision(4)} us`;
  const skipped = trace.skippedLines.length
    ? `; skipped rows: ${trace.skippedLines.join(", ")}`
    : "";
  return `${n} points, ${range}${skipped}`;
}
