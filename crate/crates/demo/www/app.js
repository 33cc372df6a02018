import init, { Demo } from "./pkg/araucana_demo.js";

const COLORS = ["#d95f02", "#1b9e77"];
const SHADE = ["rgba(217,95,2,0.12)", "rgba(27,158,119,0.12)"];
const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
const out = $("out");

let demo = null;
let grid = null;
let points = [];
let overlay = null;

const num = (id) => Number($(id).value);
const toPx = (x, y) => [
  ((x - grid.x[0]) / (grid.x[1] - grid.x[0])) * canvas.width,
  (1 - (y - grid.y[0]) / (grid.y[1] - grid.y[0])) * canvas.height,
];
const fromPx = (px, py) => [
  grid.x[0] + (px / canvas.width) * (grid.x[1] - grid.x[0]),
  grid.y[0] + (1 - py / canvas.height) * (grid.y[1] - grid.y[0]),
];

function dot(x, y, r, fill, stroke) {
  const [px, py] = toPx(x, y);
  ctx.beginPath();
  ctx.arc(px, py, r, 0, 2 * Math.PI);
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.lineWidth = 1.5; ctx.stroke(); }
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const cw = canvas.width / grid.n, ch = canvas.height / grid.n;
  grid.labels.forEach((l, k) => {
    const i = k % grid.n, j = Math.floor(k / grid.n);
    ctx.fillStyle = SHADE[l] ?? "#eee";
    ctx.fillRect(i * cw, canvas.height - (j + 1) * ch, cw + 1, ch + 1);
  });
  for (const p of points) dot(p.x, p.y, 2.5, COLORS[p.label]);
  if (!overlay) return;
  if (overlay.box) {
    const [bx, by] = [overlay.box.x, overlay.box.y];
    const [x0, y1] = toPx(bx[0] ?? grid.x[0], by[0] ?? grid.y[0]);
    const [x1, y0] = toPx(bx[1] ?? grid.x[1], by[1] ?? grid.y[1]);
    ctx.strokeStyle = "#333";
    ctx.setLineDash([6, 4]);
    ctx.lineWidth = 2;
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    ctx.setLineDash([]);
    for (const p of overlay.set) {
      if (p.kind === "original") dot(p.x, p.y, 4, null, "#333");
      if (p.kind === "synthetic") dot(p.x, p.y, 3, "#7570b3");
    }
    const q = overlay.set.find((p) => p.kind === "query");
    if (q) { dot(q.x, q.y, 7, COLORS[overlay.oracle], "#000"); }
  }
  for (const m of overlay.misses ?? []) {
    const [px, py] = toPx(m.x, m.y);
    ctx.strokeStyle = m.explainer === "linear" ? "#e7298a" : "#000";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(px - 5, py - 5); ctx.lineTo(px + 5, py + 5);
    ctx.moveTo(px + 5, py - 5); ctx.lineTo(px - 5, py + 5);
    ctx.stroke();
  }
}

function train() {
  out.textContent = "training…";
  setTimeout(() => {
    try {
      demo?.free();
      demo = new Demo(num("rows"), num("minority"), num("trees"), num("seed"));
      grid = JSON.parse(demo.boundary(80));
      const p = JSON.parse(demo.points());
      points = p.points;
      overlay = null;
      out.textContent =
        `${points.length} training rows, ${p.test_rows} held out\n` +
        `forest training accuracy: ${p.training_accuracy.toFixed(3)}`;
      draw();
    } catch (e) {
      out.textContent = `error: ${e}`;
    }
  });
}

canvas.addEventListener("click", (ev) => {
  if (!demo) return;
  const r = canvas.getBoundingClientRect();
  const [x, y] = fromPx(ev.clientX - r.left, ev.clientY - r.top);
  try {
    const e = JSON.parse(demo.explain(x, y, num("nn"), $("smote").checked));
    overlay = e;
    const synth = e.set.filter((p) => p.kind === "synthetic").length;
    out.textContent =
      `query (${x.toFixed(3)}, ${y.toFixed(3)})\n${e.rule}\n` +
      `black box: ${e.oracle}  tree: ${e.prediction}  faithful: ${e.faithful}\n` +
      `tree depth ${e.depth}, ${e.leaves} leaves; ${synth} synthetic rows`;
    draw();
  } catch (err) {
    out.textContent = `error: ${err}`;
  }
});

$("fid").addEventListener("click", () => {
  if (!demo) return;
  out.textContent = "evaluating…";
  setTimeout(() => {
    try {
      const f = JSON.parse(demo.fidelity(num("limit"), num("nn")));
      const fmt = (s) => `${s.agreements}/${s.total} = ${s.fidelity.toFixed(3)}`;
      overlay = { misses: f.disagreements };
      out.textContent =
        `tree rules: ${fmt(f.araucana)}\nlinear:     ${fmt(f.linear)}\n` +
        `crosses mark disagreements (pink = linear)`;
      draw();
    } catch (e) {
      out.textContent = `error: ${e}`;
    }
  });
});

$("train").addEventListener("click", train);
await init();
train();
