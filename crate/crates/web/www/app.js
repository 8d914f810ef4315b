import init, { entropyCurve, lawSummary, cutoffProfile, trajectory } from "./pkg/exchange_cutoff_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function report(id, f) {
  try {
    f();
    $(id).classList.remove("err");
  } catch (e) {
    $(id).textContent = String(e.message ?? e);
    $(id).classList.add("err");
  }
}

// series: [{xs, ys, color, dots?, band?}]
function plot(canvas, series, { ymin, ymax, xlabel = "", ylabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 50, B = 28;
  ctx.clearRect(0, 0, W, H);
  const all = series.flatMap((s) => s.xs);
  const x0 = Math.min(...all), x1 = Math.max(...all);
  const ys = series.flatMap((s) => s.ys);
  const y0 = ymin ?? Math.min(...ys), y1 = ymax ?? Math.max(...ys);
  const px = (x) => L + ((x - x0) / (x1 - x0 || 1)) * (W - L - 10);
  const py = (y) => H - B - ((y - y0) / (y1 - y0 || 1)) * (H - B - 10);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(L, 10, W - L - 10, H - B - 10);
  ctx.fillStyle = "#333";
  ctx.fillText(y1.toPrecision(3), 4, 16);
  ctx.fillText(y0.toPrecision(3), 4, H - B);
  ctx.fillText(x0.toPrecision(3), L, H - 8);
  ctx.fillText(x1.toPrecision(3), W - 50, H - 8);
  ctx.fillText(xlabel, W / 2, H - 8);
  ctx.fillText(ylabel, 4, H / 2);
  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.dots) {
      s.xs.forEach((x, i) => {
        ctx.beginPath();
        ctx.arc(px(x), py(s.ys[i]), 3, 0, 2 * Math.PI);
        ctx.fill();
        if (s.band) {
          ctx.beginPath();
          ctx.moveTo(px(x), py(s.ys[i] - 2 * s.band[i]));
          ctx.lineTo(px(x), py(s.ys[i] + 2 * s.band[i]));
          ctx.stroke();
        }
      });
    } else {
      ctx.beginPath();
      s.xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.ys[i])) : ctx.moveTo(px(x), py(s.ys[i]))));
      ctx.stroke();
    }
  }
}

function runEntropy() {
  report("ent-out", () => {
    const amax = num("ent-amax");
    const alphas = Array.from({ length: 80 }, (_, k) => 0.1 + ((amax - 0.1) * k) / 79);
    const v = entropyCurve(Float64Array.from(alphas));
    const h = [], s2 = [];
    for (let k = 0; k < alphas.length; k++) {
      h.push(v[3 * k]);
      s2.push(v[3 * k + 1]);
    }
    plot($("ent-canvas"), [
      { xs: alphas, ys: h, color: "#1565c0" },
      { xs: alphas, ys: s2, color: "#c62828" },
    ], { ymin: 0, xlabel: "alpha", ylabel: "" });
    const s = lawSummary($("ent-law").value, num("ent-n"));
    $("ent-out").textContent =
      `blue h, red s^2\n${$("ent-law").value}: h=${s[0].toFixed(6)} s^2=${s[1].toFixed(6)} r=${s[2].toFixed(6)} ` +
      `E[X^2]=${s[3].toFixed(6)}  t_ent=${s[4].toFixed(1)} t_w=${s[5].toFixed(1)}`;
  });
}

function runProfile() {
  $("pr-out").textContent = "running...";
  setTimeout(() => report("pr-out", () => {
    const betas = [-3, -2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3];
    const started = performance.now();
    const v = cutoffProfile($("pr-model").value, $("pr-law").value, num("pr-n"),
      Float64Array.from(betas), num("pr-rep"), num("pr-seed"));
    const w = [], se = [], th = [];
    let text = "beta      t    W1     se   theorem\n";
    betas.forEach((b, k) => {
      w.push(v[4 * k + 1]);
      se.push(v[4 * k + 2]);
      th.push(v[4 * k + 3]);
      text += `${b.toFixed(1).padStart(4)} ${String(v[4 * k]).padStart(7)} ${w[k].toFixed(3)} ${se[k].toFixed(3)} ${th[k].toFixed(3)}\n`;
    });
    plot($("pr-canvas"), [
      { xs: betas, ys: w, color: "#1565c0", dots: true, band: se },
      { xs: betas, ys: th, color: "#2e7d32" },
    ], { ymin: 0, ymax: 2, xlabel: "beta" });
    $("pr-out").textContent = text + `(${((performance.now() - started) / 1000).toFixed(1)} s)`;
  }), 10);
}

let timer = null;

function runTrajectory() {
  stopTrajectory();
  report("tr-out", () => {
    const n = num("tr-n"), frames = 200;
    const v = trajectory($("tr-model").value, $("tr-law").value, n, num("tr-steps"), frames, num("tr-seed"));
    let f = 0;
    const xs = Array.from({ length: n }, (_, i) => i);
    timer = setInterval(() => {
      const frame = Array.from(v.subarray(f * n, (f + 1) * n)).sort((a, b) => b - a);
      const l1 = frame.reduce((acc, e) => acc + Math.abs(e - 1 / n), 0);
      plot($("tr-canvas"), [{ xs, ys: frame, color: "#6a1b9a" }], { ymin: 0, xlabel: "rank" });
      $("tr-out").textContent = `step ${f * num("tr-steps")}  max ${frame[0].toExponential(3)}  L1 to flat ${l1.toFixed(4)}`;
      f += 1;
      if (f >= frames) stopTrajectory();
    }, 50);
  });
}

function stopTrajectory() {
  if (timer !== null) clearInterval(timer);
  timer = null;
}

await init();
$("ent-run").onclick = runEntropy;
$("pr-run").onclick = runProfile;
$("tr-run").onclick = runTrajectory;
$("tr-stop").onclick = stopTrajectory;
runEntropy();
