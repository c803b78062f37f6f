import init, { rateCurve, beampatternCut, errorProbability } from "./pkg/ris_backcom_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, ys, { yMin, yMax, marker } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  const lo = yMin ?? Math.min(...ys);
  const hi = yMax ?? Math.max(...ys);
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((Math.min(Math.max(y, lo), hi) - lo) / (hi - lo || 1)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toFixed(2), 2, pad + 4);
  ctx.fillText(lo.toFixed(2), 2, h - pad);
  ctx.fillText(String(x0), pad, h - pad + 14);
  ctx.fillText(String(x1), w - pad - 16, h - pad + 14);
  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
  if (marker !== undefined) {
    ctx.strokeStyle = "#c62828";
    ctx.beginPath();
    ctx.moveTo(px(marker), pad);
    ctx.lineTo(px(marker), h - pad);
    ctx.stroke();
  }
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).textContent = `error: ${e.message ?? e}`;
  }
}

function drawRate() {
  guard("rate-out", () => {
    const lo = num("rate-lo"), hi = num("rate-hi");
    const rates = rateCurve(num("rate-n"), lo, hi);
    const ls = Array.from(rates, (_, i) => lo + i);
    let best = 0;
    rates.forEach((r, i) => { if (r > rates[best]) best = i; });
    $("rate-out").textContent = `peak L=${ls[best]}, rate ${rates[best].toFixed(4)} bit/PRI`;
    plot($("rate-plot"), ls, Array.from(rates), { yMin: 0, marker: ls[best] });
  });
}

function drawBeam() {
  guard("bp-out", () => {
    const n = num("bp-n");
    const points = 361;
    const db = beampatternCut(num("bp-src"), num("bp-tgt"), n, Math.max(21, n + 1), points);
    const az = Array.from(db, (_, i) => -90 + (180 * i) / (points - 1));
    $("bp-out").textContent = `dB relative to target gain, ${n} subarray(s)`;
    plot($("bp-plot"), az, Array.from(db), { yMin: -40, yMax: 0, marker: num("bp-tgt") });
  });
}

function computePe() {
  $("pe-out").textContent = "running...";
  // let the label paint before the blocking call
  setTimeout(() => guard("pe-out", () => {
    const t0 = performance.now();
    const [pe, se] = errorProbability(num("pe-snr"), num("pe-l"), num("pe-spread"), BigInt(num("pe-draws")), BigInt(num("pe-seed")));
    const ms = (performance.now() - t0).toFixed(0);
    $("pe-out").textContent = `P_e = ${pe.toExponential(3)} ± ${se.toExponential(2)} (${ms} ms)`;
  }), 10);
}

await init();
$("status").textContent = "ready";
$("rate-go").onclick = drawRate;
$("bp-go").onclick = drawBeam;
$("pe-go").onclick = computePe;
drawRate();
drawBeam();
