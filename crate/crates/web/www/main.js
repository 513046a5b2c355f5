import init, { Demo, compareCoverage } from "./pkg/ctraj_web.js";

const $ = (id) => document.getElementById(id);

function drawProjection(demo) {
  const az = +$("az").value, el = +$("el").value;
  $("az-val").textContent = az;
  $("el-val").textContent = el;
  const n = demo.size();
  const px = demo.project(az, el);
  const off = new OffscreenCanvas(n, n);
  const octx = off.getContext("2d");
  const img = octx.createImageData(n, n);
  for (let i = 0; i < px.length; i++) {
    const g = Math.round(255 * px[i]);
    img.data.set([g, g, g, 255], 4 * i);
  }
  octx.putImageData(img, 0, 0);
  const ctx = $("proj").getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, ctx.canvas.width, ctx.canvas.height);
}

function drawSources(canvas, result, axes) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, r = w / 2 - 12;
  ctx.clearRect(0, 0, w, w);
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.arc(w / 2, w / 2, r, 0, 2 * Math.PI);
  ctx.stroke();
  const dot = (s, color, size) => {
    ctx.fillStyle = color;
    ctx.fillRect(w / 2 + r * s[axes[0]] - size / 2, w / 2 - r * s[axes[1]] - size / 2, size, size);
  };
  for (const s of result.candidates) if (!s.selected) dot(s, "#bbb", 3);
  for (const s of result.circular) dot(s, "#1f77b4", 6);
  for (const s of result.candidates) if (s.selected) dot(s, "#d62728", 6);
}

function drawCurve(canvas, result) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 24;
  ctx.clearRect(0, 0, w, h);
  const ys = [0, ...result.greedy_curve];
  const x = (i) => pad + (w - 2 * pad) * i / Math.max(1, ys.length - 1);
  const y = (v) => h - pad - (h - 2 * pad) * v / 100;
  ctx.strokeStyle = "#1f77b4";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, y(result.circular_percent));
  ctx.lineTo(w - pad, y(result.circular_percent));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#d62728";
  ctx.beginPath();
  ys.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.fillText("100%", 0, y(100) + 4);
  ctx.fillText("0", 8, y(0) + 4);
}

function runComparison() {
  try {
    const r = JSON.parse(compareCoverage(+$("n").value, +$("k").value, +$("m").value, +$("dg").value));
    $("summary").textContent =
      `k = ${r.k}: greedy ${r.greedy_percent.toFixed(1)}% vs circular ${r.circular_percent.toFixed(1)}% of plane normals covered` +
      " (red: greedy picks, blue: circular orbit).";
    drawSources($("top"), r, ["x", "y"]);
    drawSources($("side"), r, ["x", "z"]);
    drawCurve($("curve"), r);
  } catch (e) {
    $("summary").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
const demo = new Demo(48);
$("status").textContent = "";
$("az").addEventListener("input", () => drawProjection(demo));
$("el").addEventListener("input", () => drawProjection(demo));
$("run").addEventListener("click", runComparison);
drawProjection(demo);
runComparison();
