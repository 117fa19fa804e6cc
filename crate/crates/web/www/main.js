import init, { reversibleExplorer, enzymeExplorer, ssaHistogram } from "./pkg/cme_reduce_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h, pad, xr, yr, logY) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, 8, w - pad - 8, h - pad - 8);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  const fmt = (v) => (logY ? "1e" + v.toFixed(0) : v.toPrecision(3));
  ctx.fillText(fmt(yr[1]), 2, 16);
  ctx.fillText(fmt(yr[0]), 2, h - pad);
  ctx.fillText(xr[0].toPrecision(3), pad, h - pad + 14);
  ctx.fillText(xr[1].toPrecision(3), w - 40, h - pad + 14);
  const sx = (x) => pad + ((x - xr[0]) / (xr[1] - xr[0] || 1)) * (w - pad - 8);
  const sy = (y) => h - pad - ((y - yr[0]) / (yr[1] - yr[0] || 1)) * (h - pad - 16);
  return { sx, sy };
}

function lines(canvas, xs, series, { logY = false, markers = false } = {}) {
  const ctx = canvas.getContext("2d");
  const tr = (v) => (logY ? Math.log10(Math.max(v, 1e-300)) : v);
  const ys = series.flatMap((s) => s.data.map(tr)).filter(Number.isFinite);
  let lo = Math.min(...ys), hi = Math.max(...ys);
  if (lo === hi) { lo -= 1; hi += 1; }
  const { sx, sy } = axes(ctx, canvas.width, canvas.height, 44, [xs[0], xs[xs.length - 1]], [lo, hi], logY);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    s.data.forEach((v, i) => {
      const x = sx(xs[i]), y = sy(tr(v));
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
      if (markers) ctx.fillRect(x - 2, y - 2, 4, 4);
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function bars(canvas, xs, hist, curve) {
  const ctx = canvas.getContext("2d");
  const hi = Math.max(...hist, ...curve) || 1;
  const { sx, sy } = axes(ctx, canvas.width, canvas.height, 44, [xs[0] - 0.5, xs[xs.length - 1] + 0.5], [0, hi], false);
  const bw = Math.max(1, sx(1) - sx(0) - 1);
  ctx.fillStyle = "#bbb";
  hist.forEach((v, i) => ctx.fillRect(sx(xs[i]) - bw / 2, sy(v), bw, sy(0) - sy(v)));
  ctx.strokeStyle = "#d62728";
  ctx.beginPath();
  curve.forEach((v, i) => (i ? ctx.lineTo(sx(xs[i]), sy(v)) : ctx.moveTo(sx(xs[i]), sy(v))));
  ctx.stroke();
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).textContent = "error: " + e;
  }
}

function runReversible() {
  guard("rev-out", () => {
    const t0 = performance.now();
    const r = JSON.parse(reversibleExplorer(num("rev-kf"), num("rev-kb"), num("rev-n"), num("rev-k"), num("rev-t"), 301));
    const ms = performance.now() - t0;
    lines($("rev-plot"), r.times, [
      { data: r.full, color: "#1f77b4" },
      { data: r.reduced, color: "#d62728", dash: [5, 4] },
    ]);
    const ks = r.hsv.map((_, i) => i + 1);
    lines($("rev-hsv"), ks, [
      { data: r.hsv, color: "#1f77b4" },
      { data: r.bounds.map((b) => b || 1e-300), color: "#d62728" },
    ], { logY: true, markers: true });
    $("rev-out").textContent =
      `states ${r.states}, balanced order ${r.q}, kept ${r.k}\n` +
      `L2 error bound      ${r.bound.toExponential(4)}\n` +
      `L2 gain on grid     ${r.grid_gain.toExponential(4)}\n` +
      `max pointwise error ${r.sup_error.toExponential(4)}\n` +
      `right plot: Hankel singular values (blue) and bound per order (red), log scale\n` +
      `${ms.toFixed(0)} ms`;
  });
}

function runEnzyme() {
  guard("enz-out", () => {
    const r = JSON.parse(enzymeExplorer(num("enz-s"), num("enz-e"), num("enz-k"), num("enz-t"), 401));
    lines($("enz-plot"), r.times, [
      { data: r.full, color: "#1f77b4" },
      { data: r.reduced, color: "#d62728", dash: [5, 4] },
      { data: r.michaelis_menten, color: "#2ca02c" },
    ]);
    $("enz-out").textContent =
      `probability that all substrate is converted\n` +
      `states ${r.states}, balanced order ${r.q}, kept ${r.k}, bound ${r.bound.toExponential(4)}\n` +
      `max error reduced            ${r.sup_error_reduced.toExponential(4)}\n` +
      `max error Michaelis-Menten   ${r.sup_error_mm.toExponential(4)}`;
  });
}

function runSsa() {
  guard("ssa-out", () => {
    const r = JSON.parse(ssaHistogram(num("ssa-kf"), num("ssa-kb"), num("ssa-n"), num("ssa-runs"), num("ssa-t"), BigInt(num("ssa-seed"))));
    bars($("ssa-plot"), r.counts, r.ssa, r.cme);
    $("ssa-out").textContent = `total variation ${r.tv.toFixed(4)} over ${r.runs} runs, seed ${r.seed}\n${r.generator}`;
  });
}

await init();
$("rev-run").onclick = runReversible;
$("enz-run").onclick = runEnzyme;
$("ssa-run").onclick = runSsa;
runReversible();
runEnzyme();
runSsa();
