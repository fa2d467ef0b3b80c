import init, { survival_curve, cluster_bag, kaplan_meier_curve } from "./pkg/scmil_demo.js";

const $ = (id) => document.getElementById(id);
const nums = (s) => s.split(",").map((x) => parseFloat(x.trim())).filter((x) => !Number.isNaN(x));
const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

function axes(ctx, w, h, xmax, ymax, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#555";
  ctx.fillText("0", pad - 12, h - pad + 12);
  ctx.fillText(xmax.toFixed(1), w - pad - 10, h - pad + 14);
  ctx.fillText(ymax.toFixed(2), 2, pad + 4);
  return {
    x: (t) => pad + (t / xmax) * (w - 2 * pad),
    y: (v) => h - pad - (v / ymax) * (h - 2 * pad),
  };
}

function drawCurve() {
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const horizon = parseFloat($("horizon").value);
  let rows;
  try {
    rows = survival_curve(new Float64Array(nums($("logits").value)), new Float64Array(nums($("mus").value)),
      new Float64Array(nums($("sigmas").value)), horizon, 300);
    $("curve-err").textContent = "";
  } catch (e) {
    $("curve-err").textContent = String(e);
    return;
  }
  let fmax = 0;
  for (let i = 2; i < rows.length; i += 3) fmax = Math.max(fmax, rows[i]);
  const ymax = Math.max(1, fmax);
  const m = axes(ctx, canvas.width, canvas.height, horizon, ymax, 30);
  for (const [col, colour] of [[1, "#1f77b4"], [2, "#d62728"]]) {
    ctx.strokeStyle = colour;
    ctx.beginPath();
    for (let i = 0; i < rows.length; i += 3) {
      const px = m.x(rows[i]), py = m.y(rows[i + col]);
      i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    }
    ctx.stroke();
  }
  ctx.fillStyle = "#1f77b4"; ctx.fillText("survival S(t)", canvas.width - 140, 20);
  ctx.fillStyle = "#d62728"; ctx.fillText("density f(t)", canvas.width - 140, 34);
}

function drawBag() {
  const canvas = $("bag");
  const ctx = canvas.getContext("2d");
  const w1 = parseFloat($("w1").value);
  $("w1-val").textContent = w1.toFixed(2);
  let rows;
  try {
    rows = cluster_bag(parseInt($("n").value, 10), w1, parseInt($("size").value, 10), BigInt($("seed").value || 0));
    $("cluster-err").textContent = "";
  } catch (e) {
    $("cluster-err").textContent = String(e);
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const s = canvas.width - 20;
  for (let i = 0; i < rows.length; i += 4) {
    const x = 10 + rows[i] * s, y = 10 + rows[i + 1] * s;
    ctx.fillStyle = PALETTE[rows[i + 3] % PALETTE.length];
    ctx.beginPath();
    if (rows[i + 2] === 1) ctx.arc(x, y, 4, 0, 2 * Math.PI);
    else ctx.rect(x - 4, y - 4, 8, 8);
    ctx.fill();
  }
}

function drawKm() {
  const canvas = $("km");
  const ctx = canvas.getContext("2d");
  const times = [], events = [];
  for (const line of $("km-data").value.split("\n")) {
    if (!line.trim()) continue;
    const [t, e] = line.split(",").map((x) => parseFloat(x));
    times.push(t);
    events.push(e ? 1 : 0);
  }
  let rows;
  try {
    rows = kaplan_meier_curve(new Float64Array(times), new Uint8Array(events));
    $("km-err").textContent = "";
  } catch (e) {
    $("km-err").textContent = String(e);
    return;
  }
  const tmax = Math.max(...times, 1e-9);
  const m = axes(ctx, canvas.width, canvas.height, tmax, 1, 30);
  ctx.strokeStyle = "#2ca02c";
  ctx.beginPath();
  ctx.moveTo(m.x(0), m.y(1));
  let prev = 1;
  for (let i = 2; i < rows.length; i += 2) {
    ctx.lineTo(m.x(rows[i]), m.y(prev));
    ctx.lineTo(m.x(rows[i]), m.y(rows[i + 1]));
    prev = rows[i + 1];
  }
  ctx.lineTo(m.x(tmax), m.y(prev));
  ctx.stroke();
}

await init();
for (const id of ["logits", "mus", "sigmas", "horizon"]) $(id).addEventListener("input", drawCurve);
for (const id of ["w1", "n", "size", "seed"]) $(id).addEventListener("input", drawBag);
$("km-data").addEventListener("input", drawKm);
drawCurve();
drawBag();
drawKm();
