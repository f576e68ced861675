// Typed client for the nvpulse /v1 HTTP JSON API. Every number the UI
// displays comes from these responses; the UI itself does no physics.

export interface RecordSummary {
  record_id: string;
  engine_version: string;
  created_at: string;
  isotope: string | null;
  b0_T: number;
  theta_deg: number;
  m: number;
  transition: string;
  rabi_MHz: number;
  t_pi_ns: number;
  family_id: string | null;
  seed: number | null;
  tau_start_us: number;
  tau_stop_us: number;
  tau_points: number;
  trace_url: string;
}

export interface RecordsResponse {
  engine_version: string;
  count: number;
  records: RecordSummary[];
}

export interface RankingEntry {
  rank: number;
  r: number;
  slope: number;
  intercept: number;
  record: RecordSummary;
}

export interface CompareResponse {
  engine_version: string;
  skipped_rows: number[];
  ranking: RankingEntry[];
  unranked: { record_id: string; reason: string }[];
  ranking_csv: string;
}

export interface SimulateRequest {
  system: {
    nitrogen: string | null;
    b0_T: number;
    theta_deg?: number;
    azimuth_deg?: number;
  };
  protocol: string;
  tau: { start_us: number; stop_us: number; points: number };
  transition?: string;
  rabi_MHz?: number;
  t_pi_us?: number | null;
  m?: number;
  seed?: number | null;
  g?: number | null;
  signal?: { amp_MHz: number; freq_MHz: number; phase_rad?: number } | null;
  spp?: number;
}

export interface SimulateResponse {
  engine_version: string;
  metadata: Record<string, unknown>;
  trace_csv: string;
}

// Keys are the service's own query/form parameter names.
export interface RecordFilters {
  isotope?: string;
  b0_T?: number;
  b0_min_T?: number;
  b0_max_T?: number;
  theta_deg?: number;
  m?: number;
  transition?: string;
  family_id?: string;
  seed?: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`API ${status}: ${detail}`);
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
    else if (body.detail) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async health(): Promise<{ status: string; engine_version: string }> {
    const res = await fetch(this.url("/v1/health"));
    await raiseForStatus(res);
    return res.json();
  }

  async records(filters: RecordFilters = {}): Promise<RecordsResponse> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined && value !== "") params.set(key, String(value));
    }
    const query = params.toString();
    const res = await fetch(this.url(`/v1/records${query ? "?" + query : ""}`));
    await raiseForStatus(res);
    return res.json();
  }

  async recordTrace(recordId: string): Promise<string> {
    const res = await fetch(this.url(`/v1/records/${recordId}/trace`));
    await raiseForStatus(res);
    return res.text();
  }

  async simulate(request: SimulateRequest): Promise<SimulateResponse> {
    const res = await fetch(this.url("/v1/simulate"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async compare(
    fileText: string,
    filters: RecordFilters = {},
    topK = 5,
  ): Promise<CompareResponse> {
    const form = new FormData();
    form.append("file", new Blob([fileText], { type: "text/csv" }), "upload.csv");
    form.append("top_k", String(topK));
    // the service skips malformed rows and reports them; the upload panel
    // already showed the user its own per-row report
    form.append("strict", "false");
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined && value !== "") form.append(key, String(value));
    }
    const res = await fetch(this.url("/v1/compare"), { method: "POST", body: form });
    await raiseForStatus(res);
    return res.json();
  }
}
