import init, { solve_frame, weight_sweep, solve_learned } from "./pkg/mec_ibnb_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const canvas = $("plot");
const ctx = canvas.getContext("2d");

function show(text, isError = false) {
  $("summary").textContent = text;
  $("summary").className = isError ? "err" : "";
}

function fmt(v) {
  return v === null || v === undefined ? "-" : Number(v).toPrecision(6);
}

function drawTree(tree) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!tree.length) return;
  const byDepth = new Map();
  for (const n of tree) {
    if (!byDepth.has(n.depth)) byDepth.set(n.depth, []);
    byDepth.get(n.depth).push(n);
  }
  const depths = Math.max(...byDepth.keys()) + 1;
  const pos = new Map();
  for (const [d, nodes] of byDepth) {
    nodes.forEach((n, i) => {
      pos.set(n.id, {
        x: ((i + 0.5) / nodes.length) * canvas.width,
        y: 16 + (d / Math.max(depths - 1, 1)) * (canvas.height - 32),
      });
    });
  }
  ctx.strokeStyle = "#bbb";
  for (const n of tree) {
    if (n.parent === null || !pos.has(n.parent)) continue;
    const a = pos.get(n.parent), b = pos.get(n.id);
    ctx.beginPath(); ctx.moveTo(a.x, a.y); ctx.lineTo(b.x, b.y); ctx.stroke();
  }
  const colour = { Branched: "#4a7bd0", NewIncumbent: "#1a9a3a", PrunedByBound: "#999", PrunedInfeasible: "#d04a4a", PrunedByModel: "#e0a020" };
  for (const n of tree) {
    const p = pos.get(n.id);
    ctx.fillStyle = colour[n.action] || "#444";
    ctx.beginPath(); ctx.arc(p.x, p.y, 3.5, 0, 2 * Math.PI); ctx.fill();
  }
}

function drawSweep(points) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pad = 40, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  const xs = points.map((p) => p.lambda_e);
  const series = [
    { key: "latency", colour: "#4a7bd0" },
    { key: "energy", colour: "#d04a4a" },
  ];
  const xmax = Math.max(...xs) || 1;
  for (const s of series) {
    const ys = points.map((p) => p[s.key]);
    const lo = Math.min(...ys), hi = Math.max(...ys);
    const span = hi - lo || 1;
    ctx.strokeStyle = s.colour;
    ctx.beginPath();
    points.forEach((p, i) => {
      const x = pad + (p.lambda_e / xmax) * w;
      const y = pad + h - ((p[s.key] - lo) / span) * h;
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#222";
  ctx.fillText("lambda_e", pad + w - 40, canvas.height - 10);
  ctx.fillStyle = "#4a7bd0"; ctx.fillText("latency (normalized)", pad, 20);
  ctx.fillStyle = "#d04a4a"; ctx.fillText("energy (normalized)", pad + 160, 20);
}

function run(fn) {
  try { fn(); } catch (e) { show(String(e.message || e), true); }
}

$("solve").onclick = () => run(() => {
  const r = JSON.parse(solve_frame(num("S"), num("K"), BigInt(num("seed")), num("lt"), num("le")));
  const lines = [
    `status ${r.status}   nodes ${r.nodes_searched}`,
    `psi ${fmt(r.psi)}   enumeration ${fmt(r.exhaustive_psi)}`,
    `latency ${fmt(r.latency)} s   energy ${fmt(r.energy)} J`,
  ];
  for (let s = 0; s < r.num_mds && r.x.length; s++) {
    const row = [];
    for (let k = 0; k < r.num_channels; k++) {
      const i = s * r.num_channels + k;
      if (r.x[i]) row.push(`ch${k}: ${(r.l[i] / 1e6).toFixed(3)} Mbit`);
    }
    lines.push(`device ${s}: ${row.join(", ")}`);
  }
  show(lines.join("\n"));
  drawTree(r.tree);
});

$("sweep").onclick = () => run(() => {
  const pts = JSON.parse(weight_sweep(num("S"), num("K"), BigInt(num("seed")), 4, 17));
  show(pts.map((p) => `lambda_e ${p.lambda_e.toFixed(2)}  latency ${fmt(p.latency)}  energy ${fmt(p.energy)}  nodes ${p.nodes_searched}`).join("\n"));
  drawSweep(pts);
});

$("learned").onclick = () => run(() => {
  const r = JSON.parse(solve_learned($("model").value, BigInt(num("seed")), Number($("theta").value)));
  show([
    `exact    nodes ${r.bnb_nodes}  psi ${fmt(r.bnb_psi)}`,
    `learned  nodes ${r.ibnb_nodes}  psi ${fmt(r.ibnb_psi)}`,
    `restarts ${r.restarts}  fallback ${r.fell_back_to_exact}  thresholds ${r.thresholds_tried.map(fmt).join(", ")}`,
  ].join("\n"));
  drawTree(r.tree);
});

await init();
show("ready");
