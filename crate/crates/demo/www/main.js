import init, { simulate, analyze, rank } from "./pkg/accessband_demo.js";

const $ = (sel) => document.querySelector(sel);
const palette = ["#268bd2", "#2aa198", "#859900", "#b58900", "#6c71c4", "#d33682", "#93a1a1", "#586e75", "#cb4b16", "#073642"];

let users = [];
let selected = null;
let scenario = null;

function formValues(fieldset) {
  const out = {};
  for (const el of fieldset.querySelectorAll("input, select")) {
    if (el.type === "number" || el.type === "range") out[el.name] = Number(el.value);
    else out[el.name] = el.value;
  }
  return out;
}

function showError(e) {
  $("#error").textContent = e ? String(e) : "";
}

function scenarioConfig() {
  const f = formValues($("#scenario"));
  return {
    n_users: f.n_users,
    granularity: f.granularity,
    leaker_id: f.leaker_id.trim() || null,
    leak_start: f.leak_start,
    leak_slope: f.leak_slope,
    noise_scale: f.noise_scale,
    seed: f.seed,
  };
}

function bandRequest() {
  const f = formValues($("#band"));
  $("#vs-out").textContent = f.varsigma;
  return {
    fit: { n_changepoints: f.n_changepoints, lambda: f.lambda },
    band: { varsigma: f.varsigma, mode: f.mode },
    horizon: f.horizon,
  };
}

// Plot frame shared by both charts: returns x/y mappers for the data extent.
function frame(canvas, nPoints, lo, hi, labels) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 48, R = 12, T = 12, B = 28;
  ctx.clearRect(0, 0, W, H);
  if (hi === lo) { hi += 1; lo -= 1; }
  const pad = (hi - lo) * 0.08;
  lo -= pad; hi += pad;
  const x = (i) => L + (nPoints <= 1 ? 0 : (i * (W - L - R)) / (nPoints - 1));
  const y = (v) => T + ((hi - v) * (H - T - B)) / (hi - lo);
  ctx.strokeStyle = "#ccc";
  ctx.fillStyle = "#666";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  ctx.moveTo(L, T); ctx.lineTo(L, H - B); ctx.lineTo(W - R, H - B);
  ctx.stroke();
  for (let k = 0; k <= 4; k++) {
    const v = lo + ((hi - lo) * k) / 4;
    ctx.fillText(v.toFixed(1), 4, y(v) + 4);
  }
  const step = Math.max(1, Math.ceil(nPoints / 12));
  labels.forEach((lab, i) => {
    if (i % step === 0) ctx.fillText(lab.slice(0, 7), x(i) - 18, H - 8);
  });
  return { ctx, x, y };
}

function line(ctx, xs, ys, color, width = 1.5, dash = []) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.setLineDash(dash);
  ctx.beginPath();
  let started = false;
  xs.forEach((px, i) => {
    if (ys[i] === null || ys[i] === undefined) return;
    if (started) ctx.lineTo(px, ys[i]); else ctx.moveTo(px, ys[i]);
    started = true;
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function drawAll() {
  const n = users[0]?.values.length ?? 0;
  const vals = users.flatMap((u) => u.values);
  const { ctx, x, y } = frame($("#all"), n, Math.min(...vals), Math.max(...vals), users[0]?.labels ?? []);
  users.forEach((u, i) => {
    const xs = u.values.map((_, k) => x(k));
    line(ctx, xs, u.values.map(y), u.leaker ? "#c00" : palette[i % palette.length], u.leaker ? 2.5 : 1.2);
  });
}

function drawOne(result) {
  const rows = result.rows;
  const all = rows.flatMap((r) => [r.lower, r.upper, r.yhat, r.y ?? r.yhat]);
  const { ctx, x, y } = frame($("#one"), rows.length, Math.min(...all), Math.max(...all), rows.map((r) => r.period_label));
  const xs = rows.map((_, i) => x(i));
  // Band as a filled polygon.
  ctx.fillStyle = "rgba(38,139,210,0.12)";
  ctx.beginPath();
  rows.forEach((r, i) => (i ? ctx.lineTo(xs[i], y(r.upper)) : ctx.moveTo(xs[i], y(r.upper))));
  for (let i = rows.length - 1; i >= 0; i--) ctx.lineTo(xs[i], y(rows[i].lower));
  ctx.closePath();
  ctx.fill();
  line(ctx, xs, rows.map((r) => y(r.upper)), "#268bd2", 1, [4, 3]);
  line(ctx, xs, rows.map((r) => y(r.lower)), "#268bd2", 1, [4, 3]);
  line(ctx, xs, rows.map((r) => y(r.yhat)), "#073642", 2);
  line(ctx, xs, rows.map((r) => (r.y === null ? null : y(r.y))), "#859900", 2);
  const hs = result.horizon_start;
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo((xs[hs - 1] + xs[hs]) / 2, 12);
  ctx.lineTo((xs[hs - 1] + xs[hs]) / 2, $("#one").height - 28);
  ctx.stroke();
  rows.forEach((r, i) => {
    if (!r.breach) return;
    ctx.fillStyle = r.action === "BLOCK" ? "#c00" : r.action === "RESTRICT" ? "#cb4b16" : "#b58900";
    ctx.beginPath();
    ctx.arc(xs[i], y(r.y ?? r.yhat), 5, 0, 2 * Math.PI);
    ctx.fill();
  });
  $("#stats").textContent =
    `k=${result.k.toFixed(4)}  final rate=${result.final_rate.toFixed(4)}  μ=${result.mu.toPrecision(5)}  ` +
    `σ=${result.sigma.toPrecision(5)}  half-width=${result.half_width.toPrecision(5)}  ` +
    `changepoints=[${result.changepoints.map((s) => s.toFixed(2)).join(", ")}]`;
}

function showUser(userId) {
  const u = users.find((v) => v.user_id === userId);
  if (!u) return;
  selected = userId;
  $("#who").textContent = userId;
  try {
    const req = { ...bandRequest(), user_id: u.user_id, values: u.values, granularity: scenario.granularity, origin: u.labels[0] };
    drawOne(JSON.parse(analyze(JSON.stringify(req))));
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function run() {
  try {
    scenario = scenarioConfig();
    users = JSON.parse(simulate(JSON.stringify(scenario)));
    drawAll();
    const req = { ...bandRequest(), scenario, horizon: 1 };
    const ranked = JSON.parse(rank(JSON.stringify(req)));
    const body = $("#suspects tbody");
    body.innerHTML = "";
    ranked.forEach((s, i) => {
      const tr = document.createElement("tr");
      tr.className = "pick";
      tr.innerHTML = `<td>${i + 1}</td><td>${s.user_id}</td><td>${s.max_severity.toPrecision(4)}</td><td class="${s.action}">${s.action}</td>`;
      tr.addEventListener("click", () => showUser(s.user_id));
      body.appendChild(tr);
    });
    showUser(selected && users.some((u) => u.user_id === selected) ? selected : ranked[0]?.user_id);
    showError(null);
  } catch (e) {
    showError(e);
  }
}

await init();
$("#run").addEventListener("click", run);
$("#band").addEventListener("input", () => selected && showUser(selected));
run();
