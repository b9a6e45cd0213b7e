// Build the module first: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { run_builtin, run_custom, optimizer_step } from "./pkg/mpc_pacing_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, flows, key, label, warmup) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pad = 40;
  const xs = flows.flatMap((f) => f.time);
  const ys = flows.flatMap((f) => f[key]);
  if (!ys.length) return;
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = 0, y1 = Math.max(...ys) * 1.1;
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad / 2 - ((y - y0) / (y1 - y0 || 1)) * (h - pad);

  ctx.fillStyle = "#eee";
  ctx.fillRect(px(x0), 0, px(warmup) - px(x0), h);
  ctx.fillStyle = "#000";
  ctx.font = "12px sans-serif";
  ctx.fillText(label, pad, 14);
  ctx.fillText(y1.toFixed(1), 2, py(y1) + 10);
  ctx.fillText("0", 2, py(0));
  ctx.fillText(`${x1.toFixed(0)} s`, w - pad, h - 4);

  flows.forEach((f, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    f.time.forEach((t, j) => (j ? ctx.lineTo(px(t), py(f[key][j])) : ctx.moveTo(px(t), py(f[key][j]))));
    ctx.stroke();
  });
}

function show(json) {
  const r = JSON.parse(json);
  if (r.error) {
    $("status").textContent = r.error;
    $("status").className = "error";
    return;
  }
  $("status").className = "";
  $("status").textContent = `${r.name}: loss fraction ${r.loss_fraction.toExponential(2)}; shaded area is warmup`;
  plot($("rate"), r.flows, "rate", "pacing rate (packets/s)", r.warmup);
  plot($("rtt"), r.flows, "rtt_ms", "RTT (ms)", r.warmup);
  $("table").textContent = r.table;
}

await init();

$("b-run").onclick = () => show(run_builtin($("b-name").value, num("b-seed"), num("b-dur")));
$("c-run").onclick = () =>
  show(run_custom(num("c-rate"), num("c-buf"), num("c-flows"), num("c-rtt"), num("c-dur"), num("c-seed"), num("c-tau"), num("c-ratio")));
$("o-run").onclick = () => {
  const r = JSON.parse(optimizer_step(num("o-c1"), num("o-c2"), num("o-alpha"), num("o-rate"), num("o-rtt"), num("o-sample"), num("o-dt")));
  $("o-out").textContent = r.error
    ? r.error
    : `next rate ${r.next_rate.toFixed(4)} (target ${r.target_ms.toFixed(2)} ms, estimated bottleneck ${r.rb_hat.toFixed(2)})`;
};
