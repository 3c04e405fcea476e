/** Dependency-free canvas time-series plotting, enough for live telemetry. */

export interface Series {
  label: string;
  color: string;
  points: [number[], number[]]; // [t, value]
  dashed?: boolean;
}

export function drawPlot(canvas: HTMLCanvasElement, title: string, series: Series[], yUnit = ""): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const left = 46;
  const bottom = 18;
  const top = 20;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#141820";
  ctx.fillRect(0, 0, w, h);
  ctx.fillStyle = "#9ab";
  ctx.font = "12px system-ui, sans-serif";
  ctx.fillText(title, 8, 14);

  let tMin = Infinity;
  let tMax = -Infinity;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const s of series) {
    const [ts, vs] = s.points;
    for (let i = 0; i < ts.length; i++) {
      if (ts[i] < tMin) tMin = ts[i];
      if (ts[i] > tMax) tMax = ts[i];
      if (vs[i] < vMin) vMin = vs[i];
      if (vs[i] > vMax) vMax = vs[i];
    }
  }
  if (!isFinite(tMin) || tMax - tMin < 1e-9) return;
  if (vMax - vMin < 1e-9) {
    vMax += 0.5;
    vMin -= 0.5;
  }
  const pad = 0.08 * (vMax - vMin);
  vMax += pad;
  vMin -= pad;

  const px = (t: number) => left + ((t - tMin) / (tMax - tMin)) * (w - left - 6);
  const py = (v: number) => top + (1 - (v - vMin) / (vMax - vMin)) * (h - top - bottom);

  ctx.strokeStyle = "#2a3140";
  ctx.fillStyle = "#678";
  ctx.font = "10px system-ui, sans-serif";
  const gridLines = 4;
  for (let i = 0; i <= gridLines; i++) {
    const v = vMin + (i / gridLines) * (vMax - vMin);
    const y = py(v);
    ctx.beginPath();
    ctx.moveTo(left, y);
    ctx.lineTo(w - 6, y);
    ctx.stroke();
    ctx.fillText(v.toFixed(Math.abs(vMax - vMin) < 2 ? 2 : 1), 4, y + 3);
  }
  ctx.fillText(`${tMin.toFixed(0)}s`, left, h - 5);
  ctx.fillText(`${tMax.toFixed(0)}s${yUnit ? "  [" + yUnit + "]" : ""}`, w - 80, h - 5);

  for (const s of series) {
    const [ts, vs] = s.points;
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dashed ? [4, 3] : []);
    ctx.beginPath();
    for (let i = 0; i < ts.length; i++) {
      const x = px(ts[i]);
      const y = py(vs[i]);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
  ctx.setLineDash([]);

  let lx = left + 6;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.fillRect(lx, top - 12, 8, 3);
    ctx.fillStyle = "#9ab";
    ctx.fillText(s.label, lx + 11, top - 7);
    lx += 16 + ctx.measureText(s.label).width + 10;
  }
}
