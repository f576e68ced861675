// Panel state and its URL (de)serialization. The whole panel is
// deep-linkable: every control maps to one query parameter, values equal
// to the default are omitted, and fromQuery(toQuery(s)) reproduces s
// exactly, so reloading or sharing the URL reproduces the view.

import type { RecordFilters } from "./api.js";

export interface PanelState {
  // record-store filters
  isotope: "" | "n14" | "n15";
  b0MinT: number | null;
  b0MaxT: number | null;
  thetaDeg: number | null;
  m: number | null;
  transition: "" | "minus_one" | "plus_one";
  family: string;
  topK: number;
  // on-demand simulation controls
  simOn: boolean;
  simNitrogen: "none" | "n14" | "n15";
  simB0mT: number;
  simThetaDeg: number;
  simM: number;
  simTransition: "minus_one" | "plus_one";
  simProtocol: "hahn" | "xy8";
  simTauStartUs: number;
  simTauStopUs: number;
  simTauPoints: number;
  simSignalAmpMHz: number | null;
  simSignalFreqMHz: number | null;
  // overlay selections (record ids)
  selected: string[];
}

export function defaultState(): PanelState {
  return {
    isotope: "",
    b0MinT: null,
    b0MaxT: null,
    thetaDeg: null,
    m: null,
    transition: "",
    family: "",
    topK: 5,
    simOn: false,
    simNitrogen: "n15",
    simB0mT: 24,
    simThetaDeg: 0,
    simM: 1,
    simTransition: "minus_one",
    simProtocol: "xy8",
    simTauStartUs: 0.1,
    simTauStopUs: 2.0,
    simTauPoints: 128,
    simSignalAmpMHz: null,
    simSignalFreqMHz: null,
    selected: [],
  };
}

type Codec = {
  toStr: (v: unknown) => string;
  // undefined means "unparseable, keep the default"
  fromStr: (s: string) => unknown;
};

const str: Codec = { toStr: (v) => String(v), fromStr: (s) => s };
const num: Codec = {
  toStr: (v) => String(v),
  fromStr: (s) => (Number.isFinite(Number(s)) && s !== "" ? Number(s) : undefined),
};
const numOrNull: Codec = {
  toStr: (v) => (v === null ? "" : String(v)),
  fromStr: (s) =>
    s === "" ? null : Number.isFinite(Number(s)) ? Number(s) : undefined,
};
const bool: Codec = {
  toStr: (v) => (v ? "1" : "0"),
  fromStr: (s) => s === "1",
};
const strList: Codec = {
  toStr: (v) => (v as string[]).join("."),
  fromStr: (s) => (s === "" ? [] : s.split(".")),
};

// short, stable query keys per field
const FIELDS: [keyof PanelState, string, Codec][] = [
  ["isotope", "iso", str],
  ["b0MinT", "b0min", numOrNull],
  ["b0MaxT", "b0max", numOrNull],
  ["thetaDeg", "theta", numOrNull],
  ["m", "m", numOrNull],
  ["transition", "tr", str],
  ["family", "fam", str],
  ["topK", "top", num],
  ["simOn", "sim", bool],
  ["simNitrogen", "sn", str],
  ["simB0mT", "sb0", num],
  ["simThetaDeg", "sth", num],
  ["simM", "sm", num],
  ["simTransition", "str", str],
  ["simProtocol", "sp", str],
  ["simTauStartUs", "st0", num],
  ["simTauStopUs", "st1", num],
  ["simTauPoints", "stn", num],
  ["simSignalAmpMHz", "ssa", numOrNull],
  ["simSignalFreqMHz", "ssf", numOrNull],
  ["selected", "sel", strList],
];

export function toQuery(state: PanelState): string {
  const params = new URLSearchParams();
  const defaults = defaultState();
  for (const [field, key, codec] of FIELDS) {
    const value = codec.toStr(state[field]);
    if (value !== codec.toStr(defaults[field])) params.set(key, value);
  }
  return params.toString();
}

export function fromQuery(query: string): PanelState {
  const params = new URLSearchParams(query);
  const state = defaultState() as unknown as Record<string, unknown>;
  for (const [field, key, codec] of FIELDS) {
    const raw = params.get(key);
    if (raw === null) continue;
    const value = codec.fromStr(raw);
    if (value !== undefined) state[field] = value;
  }
  return state as unknown as PanelState;
}

// filters keyed by the service's own parameter names
export function toFilters(state: PanelState): RecordFilters {
  const filters: RecordFilters = {};
  if (state.isotope) filters.isotope = state.isotope;
  if (state.b0MinT !== null) filters.b0_min_T = state.b0MinT;
  if (state.b0MaxT !== null) filters.b0_max_T = state.b0MaxT;
  if (state.thetaDeg !== null) filters.theta_deg = state.thetaDeg;
  if (state.m !== null) filters.m = state.m;
  if (state.transition) filters.transition = state.transition;
  if (state.family) filters.family_id = state.family;
  return filters;
}
