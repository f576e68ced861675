// Panel wiring: upload, filters, on-demand simulation, overlay, ranked
// correlations. All physics numbers (traces, r, slope, intercept) come
// from the /v1 service; this file only moves them between controls, the
// URL, and the canvas.

import { ApiClient, ApiError, CompareResponse, RecordSummary } from "./api.js";
import { ParsedTrace, TraceFormatError, describeTrace, parseTraceCsv } from "./csv.js";
import { drawPlot, Series } from "./plot.js";
import { RankingRow, rankingRows } from "./ranking.js";
import { LastWriteWins, debounce } from "./schedule.js";
import { PanelState, defaultState, fromQuery, toFilters, toQuery } from "./state.js";

const COLORS = ["#c6303e", "#2456a4", "#2e8540", "#8640b8", "#b87721", "#3c9ea0"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// deployment knob, not panel state: lets a dev server page point at a
// service on another origin via ?api=http://127.0.0.1:8000
function apiBase(): string {
  return new URLSearchParams(window.location.search).get("api") ?? "";
}

class Panel {
  private apiParam = apiBase();
  private api = new ApiClient(this.apiParam);
  private state: PanelState = defaultState();
  private experimental: ParsedTrace | null = null;
  private experimentalName = "";
  private uploadText: string | null = null;
  private records: RecordSummary[] = [];
  private rows: RankingRow[] = [];
  private recordTraces = new Map<string, ParsedTrace>();
  private simTrace: ParsedTrace | null = null;
  private pending = 0;
  private sequencer = new LastWriteWins();
  private refreshSoon = debounce(() => void this.refresh(), 300);

  private canvas = el<HTMLCanvasElement>("overlay");
  private status = el<HTMLDivElement>("status");
  private uploadReport = el<HTMLDivElement>("upload-report");
  private tableBody = el<HTMLTableSectionElement>("ranking-body");
  private recordsInfo = el<HTMLDivElement>("records-info");

  start(): void {
    this.state = fromQuery(window.location.search);
    this.bindControls();
    this.pushControls();
    window.addEventListener("popstate", () => {
      this.state = fromQuery(window.location.search);
      this.pushControls();
      this.refreshSoon();
    });
    void this.api
      .health()
      .then((h) => this.note(`service ok, engine ${h.engine_version}`))
      .catch((e) => this.fail(e));
    this.refreshSoon();
  }

  // ---- controls ----------------------------------------------------

  private control<T extends HTMLElement>(id: string): T {
    return el<T>(id);
  }

  private bindControls(): void {
    el<HTMLInputElement>("file").addEventListener("change", (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) void this.loadUpload(file);
    });
    const onChange = () => {
      this.pullControls();
      this.pushUrl();
      this.refreshSoon();
    };
    for (const id of [
      "f-isotope", "f-b0min", "f-b0max", "f-theta", "f-m", "f-transition",
      "f-family", "f-topk", "s-on", "s-nitrogen", "s-b0", "s-theta", "s-m",
      "s-transition", "s-protocol", "s-tau0", "s-tau1", "s-taun", "s-amp",
      "s-freq",
    ]) {
      this.control<HTMLInputElement>(id).addEventListener("change", onChange);
    }
  }

  private pushControls(): void {
    const s = this.state;
    const set = (id: string, v: string) =>
      (this.control<HTMLInputElement>(id).value = v);
    set("f-isotope", s.isotope);
    set("f-b0min", s.b0MinT === null ? "" : String(s.b0MinT));
    set("f-b0max", s.b0MaxT === null ? "" : String(s.b0MaxT));
    set("f-theta", s.thetaDeg === null ? "" : String(s.thetaDeg));
    set("f-m", s.m === null ? "" : String(s.m));
    set("f-transition", s.transition);
    set("f-family", s.family);
    set("f-topk", String(s.topK));
    this.control<HTMLInputElement>("s-on").checked = s.simOn;
    set("s-nitrogen", s.simNitrogen);
    set("s-b0", String(s.simB0mT));
    set("s-theta", String(s.simThetaDeg));
    set("s-m", String(s.simM));
    set("s-transition", s.simTransition);
    set("s-protocol", s.simProtocol);
    set("s-tau0", String(s.simTauStartUs));
    set("s-tau1", String(s.simTauStopUs));
    set("s-taun", String(s.simTauPoints));
    set("s-amp", s.simSignalAmpMHz === null ? "" : String(s.simSignalAmpMHz));
    set("s-freq", s.simSignalFreqMHz === null ? "" : String(s.simSignalFreqMHz));
  }

  private pullControls(): void {
    const get = (id: string) => this.control<HTMLInputElement>(id).value.trim();
    const numOrNull = (id: string) => {
      const v = get(id);
      return v === "" || !Number.isFinite(Number(v)) ? null : Number(v);
    };
    const num = (id: string, fallback: number) => numOrNull(id) ?? fallback;
    const s = this.state;
    s.isotope = get("f-isotope") as PanelState["isotope"];
    s.b0MinT = numOrNull("f-b0min");
    s.b0MaxT = numOrNull("f-b0max");
    s.thetaDeg = numOrNull("f-theta");
    s.m = numOrNull("f-m");
    s.transition = get("f-transition") as PanelState["transition"];
    s.family = get("f-family");
    s.topK = Math.max(1, Math.round(num("f-topk", 5)));
    s.simOn = this.control<HTMLInputElement>("s-on").checked;
    s.simNitrogen = get("s-nitrogen") as PanelState["simNitrogen"];
    s.simB0mT = num("s-b0", 24);
    s.simThetaDeg = num("s-theta", 0);
    s.simM = Math.max(1, Math.round(num("s-m", 1)));
    s.simTransition = get("s-transition") as PanelState["simTransition"];
    s.simProtocol = get("s-protocol") as PanelState["simProtocol"];
    s.simTauStartUs = num("s-tau0", 0.1);
    s.simTauStopUs = num("s-tau1", 2.0);
    s.simTauPoints = Math.min(512, Math.max(8, Math.round(num("s-taun", 128))));
    s.simSignalAmpMHz = numOrNull("s-amp");
    s.simSignalFreqMHz = numOrNull("s-freq");
  }

  private pushUrl(): void {
    const params = new URLSearchParams(toQuery(this.state));
    if (this.apiParam) params.set("api", this.apiParam);
    const query = params.toString();
    const url = query ? `?${query}` : window.location.pathname;
    window.history.pushState(null, "", url);
  }

  // ---- upload -------------------------------------------------------

  private async loadUpload(file: File): Promise<void> {
    this.experimentalName = file.name;
    try {
      const text = await file.text();
      this.experimental = parseTraceCsv(text);
      const skipped = this.experimental.skippedLines;
      this.uploadReport.textContent = `${file.name}: ${describeTrace(this.experimental)}`;
      this.uploadReport.className = skipped.length ? "warn" : "ok";
      this.uploadText = text;
    } catch (error) {
      this.experimental = null;
      this.uploadText = null;
      this.uploadReport.textContent =
        error instanceof TraceFormatError
          ? `${file.name}: rejected, ${error.message}`
          : `${file.name}: ${String(error)}`;
      this.uploadReport.className = "error";
    }
    this.refreshSoon();
  }

  // ---- data refresh ---------------------------------------------------

  private async refresh(): Promise<void> {
    this.pending++;
    this.render();
    try {
      await this.sequencer.run(
        async () => {
          const filters = toFilters(this.state);
          const records = await this.api.records(filters);
          let compare: CompareResponse | null = null;
          if (this.experimental && this.uploadText !== null) {
            compare = await this.api.compare(this.uploadText, filters, this.state.topK);
          }
          let sim: ParsedTrace | null = null;
          if (this.state.simOn) {
            sim = await this.runSimulation();
          }
          const traces = new Map<string, ParsedTrace>();
          const wanted = compare
            ? rankingRows(compare)
                .filter((row) => this.state.selected.includes(row.recordId))
                .map((row) => row.recordId)
            : this.state.selected;
          for (const id of wanted.slice(0, COLORS.length)) {
            traces.set(id, parseTraceCsv(await this.api.recordTrace(id)));
          }
          return { records, compare, sim, traces };
        },
        (result) => {
          this.records = result.records.records;
          this.rows = result.compare ? rankingRows(result.compare) : [];
          this.simTrace = result.sim;
          this.recordTraces = result.traces;
          this.note(
            `${result.records.count} records` +
              (result.compare ? `, ranked ${result.compare.ranking.length}` : ""),
          );
        },
        (error) => this.fail(error),
      );
    } finally {
      // superseded requests skip consume/onError; the decrement must not
      this.pending = Math.max(0, this.pending - 1);
      this.render();
    }
  }

  private async runSimulation(): Promise<ParsedTrace> {
    const s = this.state;
    const signal =
      s.simSignalAmpMHz !== null && s.simSignalFreqMHz !== null
        ? { amp_MHz: s.simSignalAmpMHz, freq_MHz: s.simSignalFreqMHz }
        : null;
    const response = await this.api.simulate({
      system: {
        nitrogen: s.simNitrogen === "none" ? null : s.simNitrogen,
        b0_T: s.simB0mT * 1e-3,
        theta_deg: s.simThetaDeg,
      },
      protocol: s.simProtocol,
      tau: {
        start_us: s.simTauStartUs,
        stop_us: s.simTauStopUs,
        points: s.simTauPoints,
      },
      transition: s.simTransition,
      m: s.simM,
      signal,
    });
    return parseTraceCsv(response.trace_csv);
  }

  // ---- rendering ---------------------------------------------------

  private note(text: string): void {
    this.status.textContent = text;
    this.status.className = "ok";
  }

  private fail(error: unknown): void {
    const text =
      error instanceof ApiError
        ? `service error ${error.status}: ${error.detail}`
        : String(error);
    this.status.textContent = text;
    this.status.className = "error";
  }

  private render(): void {
    this.renderRecords();
    this.renderTable();
    this.renderOverlay();
  }

  private renderRecords(): void {
    this.recordsInfo.textContent = this.records.length
      ? `${this.records.length} records match the filter`
      : "no records match the filter";
  }

  private renderTable(): void {
    this.tableBody.replaceChildren();
    for (const row of this.rows) {
      const tr = document.createElement("tr");
      const toggle = document.createElement("input");
      toggle.type = "checkbox";
      toggle.checked = this.state.selected.includes(row.recordId);
      toggle.addEventListener("change", () => {
        const set = new Set(this.state.selected);
        if (toggle.checked) set.add(row.recordId);
        else set.delete(row.recordId);
        this.state.selected = [...set];
        this.pushUrl();
        this.refreshSoon();
      });
      const cells = [
        String(row.rank),
        row.r.toFixed(4),
        row.slope.toFixed(3),
        row.intercept.toFixed(3),
        row.label,
        row.recordId.slice(0, 12),
      ];
      const td0 = document.createElement("td");
      td0.appendChild(toggle);
      tr.appendChild(td0);
      for (const text of cells) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      this.tableBody.appendChild(tr);
    }
  }

  private renderOverlay(): void {
    const series: Series[] = [];
    const exp = this.experimental;
    if (exp) {
      series.push({
        x: exp.x,
        y: exp.p,
        color: "#222",
        label: this.experimentalName || "experimental",
        width: 2,
      });
    }
    let color = 0;
    for (const [id, trace] of this.recordTraces) {
      const row = this.rows.find((r) => r.recordId === id);
      let y = trace.p;
      let label = id.slice(0, 12);
      if (exp && row) {
        // service-fitted linear map into experimental units
        y = trace.p.map((v) => row.slope * v + row.intercept);
        label = `${label} (r=${row.r.toFixed(3)})`;
      }
      series.push({
        x: trace.x,
        y,
        color: COLORS[color++ % COLORS.length] ?? "#888",
        label,
      });
    }
    if (this.simTrace) {
      let y = this.simTrace.p;
      let label = "simulation";
      if (exp) {
        // display-only scaling onto the experimental range; a fitted map
        // exists only for stored records, via the service
        const [pLo, pHi] = [Math.min(...this.simTrace.p), Math.max(...this.simTrace.p)];
        const [cLo, cHi] = [Math.min(...exp.p), Math.max(...exp.p)];
        const scale = pHi > pLo ? (cHi - cLo) / (pHi - pLo) : 1;
        y = this.simTrace.p.map((v) => cLo + (v - pLo) * scale);
        label = "simulation (display scaled)";
      }
      series.push({ x: this.simTrace.x, y, color: "#555", label });
    }
    drawPlot(this.canvas, series, { stale: this.pending > 0 });
  }
}

document.addEventListener("DOMContentLoaded", () => {
  new Panel().start();
});
