import { describe, expect, it } from "vitest";

import { describeTrace, parseTraceCsv, TraceFormatError } from "../src/csv.js";

function rows(n: number, start = 0.1, step = 0.05): string[] {
  return Array.from({ length: n }, (_, i) => `${start + i * step},${0.5 + 0.01 * i}`);
}

describe("parseTraceCsv", () => {
  it("parses a valid counts file", () => {
    const text = ["tau_us,counts", ...rows(12)].join("\n") + "\n";
    const trace = parseTraceCsv(text);
    expect(trace.x).toHaveLength(12);
    expect(trace.kind).toBe("experimental");
    expect(trace.xColumn).toBe("tau_us");
    expect(trace.skippedLines).toEqual([]);
    expect(trace.x[0]).toBeCloseTo(0.1, 12);
  });

  it("parses a simulated p file with comments and blank lines", () => {
    const text = ["# comment", "", "t_us,p", ...rows(8)].join("\n");
    const trace = parseTraceCsv(text);
    expect(trace.kind).toBe("simulated");
    expect(trace.x).toHaveLength(8);
  });

  it("flags a corrupted row by its 1-based file line number", () => {
    const data = rows(12);
    data[4] = "not,numbers"; // file line 6: header is line 1
    const text = ["tau_us,counts", ...data].join("\n");
    const trace = parseTraceCsv(text);
    expect(trace.skippedLines).toEqual([6]);
    expect(trace.x).toHaveLength(11);
    expect(describeTrace(trace)).toContain("skipped rows: 6");
  });

  it("flags rows with the wrong column count", () => {
    const data = rows(12);
    data[0] = "0.1,0.5,9"; // line 2
    data[9] = "0.55"; // line 11
    const trace = parseTraceCsv(["tau_us,counts", ...data].join("\n"));
    expect(trace.skippedLines).toEqual([2, 11]);
  });

  it("rejects empty input", () => {
    expect(() => parseTraceCsv("")).toThrow(TraceFormatError);
    expect(() => parseTraceCsv("\n\n# only comments\n")).toThrow(/no header/);
  });

  it("rejects an unknown header with its line number", () => {
    expect(() => parseTraceCsv("frequency,amplitude\n1,2\n")).toThrow(/line 1/);
  });

  it("rejects non-monotone tau with the first offending data row", () => {
    const data = rows(12);
    data[6] = `${0.1 + 4 * 0.05},0.5`; // duplicates row 5's tau
    try {
      parseTraceCsv(["tau_us,counts", ...data].join("\n"));
      expect.unreachable("should have thrown");
    } catch (error) {
      expect(String(error)).toMatch(/violation at data row 7/);
    }
  });

  it("rejects files with fewer than 8 data rows", () => {
    const text = ["tau_us,counts", ...rows(7)].join("\n");
    expect(() => parseTraceCsv(text)).toThrow(/too few data rows \(7\)/);
  });

  it("treats empty and non-numeric cells as malformed, not zero", () => {
    const data = rows(10);
    data[2] = ",0.5"; // line 4
    data[3] = "0.30,nan"; // line 5: stricter than the service here
    const trace = parseTraceCsv(["tau_us,counts", ...data].join("\n"));
    expect(trace.skippedLines).toEqual([4, 5]);
  });

  it("accepts scientific notation", () => {
    const data = rows(8).map((row, i) => {
      const [x, p] = row.split(",");
      return `${Number(x).toExponential()},${p}`;
    });
    const trace = parseTraceCsv(["tau_us,counts", ...data].join("\n"));
    expect(trace.x).toHaveLength(8);
  });
});
