// Minimal canvas line plot for trace overlays: tau in us on x, mapped
// fluorescence units on y. Dependency-free on purpose; the interesting
// numbers all come from the service, this only draws them.

export interface Series {
  x: number[];
  y: number[];
  color: string;
  label: string;
  width?: number;
}

const MARGIN = { left: 56, right: 12, top: 10, bottom: 36 };

// trim trailing zeros only after a decimal point; never touch "800"
function tickLabel(t: number): string {
  const text = t.toPrecision(4);
  if (!text.includes(".")) return text;
  return text.replace(/0+$/, "").replace(/\.$/, "");
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const candidates = [1, 2, 5, 10].map((m) => m * mag);
  const step = candidates.find((s) => span / s <= count) ?? candidates[3] ?? 1;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export function drawPlot(
  canvas: HTMLCanvasElement,
  series: Series[],
  options: { stale?: boolean } = {},
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, w, h);

  const plotW = w - MARGIN.left - MARGIN.right;
  const plotH = h - MARGIN.top - MARGIN.bottom;
  const drawn = series.filter((s) => s.x.length > 1);
  if (!drawn.length) {
    ctx.fillStyle = "#667";
    ctx.font = "13px sans-serif";
    ctx.fillText("no traces to display", MARGIN.left + 12, h / 2);
    return;
  }

  let xLo = Infinity;
  let xHi = -Infinity;
  let yLo = Infinity;
  let yHi = -Infinity;
  for (const s of drawn) {
    for (const v of s.x) {
      if (v < xLo) xLo = v;
      if (v > xHi) xHi = v;
    }
    for (const v of s.y) {
      if (v < yLo) yLo = v;
      if (v > yHi) yHi = v;
    }
  }
  const yPad = (yHi - yLo || 1) * 0.06;
  yLo -= yPad;
  yHi += yPad;

  const toX = (v: number) => MARGIN.left + ((v - xLo) / (xHi - xLo)) * plotW;
  const toY = (v: number) => MARGIN.top + (1 - (v - yLo) / (yHi - yLo)) * plotH;

  // frame and ticks
  ctx.strokeStyle = "#99a";
  ctx.lineWidth = 1;
  ctx.strokeRect(MARGIN.left, MARGIN.top, plotW, plotH);
  ctx.fillStyle = "#334";
  ctx.font = "11px sans-serif";
  ctx.textAlign = "center";
  for (const t of niceTicks(xLo, xHi, 8)) {
    const px = toX(t);
    ctx.strokeStyle = "#eee";
    ctx.beginPath();
    ctx.moveTo(px, MARGIN.top);
    ctx.lineTo(px, MARGIN.top + plotH);
    ctx.stroke();
    ctx.fillText(String(t), px, h - MARGIN.bottom + 16);
  }
  ctx.textAlign = "right";
  for (const t of niceTicks(yLo, yHi, 6)) {
    const py = toY(t);
    ctx.strokeStyle = "#eee";
    ctx.beginPath();
    ctx.moveTo(MARGIN.left, py);
    ctx.lineTo(MARGIN.left + plotW, py);
    ctx.stroke();
    ctx.fillText(tickLabel(t), MARGIN.left - 6, py + 4);
  }
  ctx.textAlign = "center";
  ctx.fillText("tau (us)", MARGIN.left + plotW / 2, h - 6);

  for (const s of drawn) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    for (let i = 0; i < s.x.length; i++) {
      const px = toX(s.x[i] as number);
      const py = toY(s.y[i] as number);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();
  }

  // legend
  ctx.textAlign = "left";
  let ly = MARGIN.top + 14;
  for (const s of drawn) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(MARGIN.left + 10, ly - 4);
    ctx.lineTo(MARGIN.left + 30, ly - 4);
    ctx.stroke();
    ctx.fillStyle = "#223";
    ctx.fillText(s.label, MARGIN.left + 36, ly);
    ly += 16;
  }

  if (options.stale) {
    ctx.fillStyle = "rgba(255, 255, 255, 0.45)";
    ctx.fillRect(MARGIN.left, MARGIN.top, plotW, plotH);
    ctx.fillStyle = "#778";
    ctx.font = "12px sans-serif";
    ctx.fillText("recomputing...", MARGIN.left + 10, MARGIN.top + plotH - 10);
  }
}
