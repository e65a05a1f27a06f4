import init, { planar_presets, simulate_preset, plan_billiards } from "./pkg/diffcontact_web.js";

const canvas = document.getElementById("view");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
let target = [1.5, 1.0];
let anim = null;
let view = null;

function bounds(scene) {
  let lo = [Infinity, Infinity], hi = [-Infinity, -Infinity];
  const grow = (x, y, r) => {
    lo = [Math.min(lo[0], x - r), Math.min(lo[1], y - r)];
    hi = [Math.max(hi[0], x + r), Math.max(hi[1], y + r)];
  };
  for (const f of scene.frames) {
    for (const b of scene.bodies) grow(f[2 * b.com], f[2 * b.com + 1], b.radius);
  }
  for (const [, , anchor] of scene.links) if (anchor) grow(anchor[0], anchor[1], 0);
  if (scene.decision.length) grow(target[0], target[1], 0.05);
  const pad = 0.1 * Math.max(hi[0] - lo[0], hi[1] - lo[1]) + 0.05;
  lo = [lo[0] - pad, lo[1] - pad];
  hi = [hi[0] + pad, hi[1] + pad];
  const s = Math.min(canvas.width / (hi[0] - lo[0]), canvas.height / (hi[1] - lo[1]));
  return { lo, hi, s };
}

const px = (x, y) => [(x - view.lo[0]) * view.s, canvas.height - (y - view.lo[1]) * view.s];

function drawWall([n, off]) {
  // points p with n·p = off, traced along the tangent
  const p0 = [n[0] * off, n[1] * off];
  const t = [-n[1], n[0]];
  const L = 1e3;
  const [ax, ay] = px(p0[0] - L * t[0], p0[1] - L * t[1]);
  const [bx, by] = px(p0[0] + L * t[0], p0[1] + L * t[1]);
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(ax, ay);
  ctx.lineTo(bx, by);
  ctx.stroke();
}

function drawFrame(scene, k) {
  const f = scene.frames[k];
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  scene.walls.forEach(drawWall);
  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1.5;
  for (const [a, b, anchor] of scene.links) {
    const pa = a === null ? anchor : [f[2 * a], f[2 * a + 1]];
    ctx.beginPath();
    ctx.moveTo(...px(pa[0], pa[1]));
    ctx.lineTo(...px(f[2 * b], f[2 * b + 1]));
    ctx.stroke();
  }
  scene.bodies.forEach((b, i) => {
    const [cx, cy] = px(f[2 * b.com], f[2 * b.com + 1]);
    ctx.fillStyle = `hsl(${(i * 67) % 360} 55% 60%)`;
    ctx.beginPath();
    ctx.arc(cx, cy, b.radius * view.s, 0, 2 * Math.PI);
    ctx.fill();
    if (b.tip !== null) {
      const dx = f[2 * b.tip] - f[2 * b.com], dy = f[2 * b.tip + 1] - f[2 * b.com + 1];
      const n = Math.hypot(dx, dy) || 1;
      ctx.strokeStyle = "#222";
      ctx.beginPath();
      ctx.moveTo(cx, cy);
      ctx.lineTo(...px(f[2 * b.com] + b.radius * dx / n, f[2 * b.com + 1] + b.radius * dy / n));
      ctx.stroke();
    }
  });
  if (scene.decision.length) {
    const [tx, ty] = px(target[0], target[1]);
    ctx.strokeStyle = "#c22";
    ctx.beginPath();
    ctx.arc(tx, ty, 6, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

function play(scene, header) {
  if (anim) cancelAnimationFrame(anim);
  view = bounds(scene);
  const e0 = scene.energy[0];
  let k = 0;
  const tick = () => {
    drawFrame(scene, k);
    const drift = Math.abs(scene.energy[k] - e0);
    status.textContent = `${header}\nt = ${(k * scene.dt).toFixed(2)} s   E = ${scene.energy[k].toFixed(6)}   |E - E0| = ${drift.toExponential(2)}`;
    k += 1;
    if (k < scene.frames.length) anim = requestAnimationFrame(tick);
  };
  tick();
}

function slider(id) {
  const el = document.getElementById(id);
  const out = document.getElementById(`${id}-val`);
  const show = () => (out.textContent = el.value < 0 ? "preset" : Number(el.value).toFixed(2));
  el.addEventListener("input", show);
  show();
  return el;
}

function runSimulation() {
  const name = document.getElementById("preset").value;
  const seed = Number(document.getElementById("seed").value);
  const steps = Number(document.getElementById("steps").value);
  try {
    const scene = JSON.parse(simulate_preset(name, seed, steps, Number(mu.value), Number(e.value)));
    play(scene, `${name}, seed ${seed}`);
  } catch (err) {
    status.textContent = `simulation failed: ${err}`;
  }
}

function runPlan() {
  const iters = Number(document.getElementById("iters").value);
  status.textContent = "planning…";
  setTimeout(() => {
    try {
      const scene = JSON.parse(plan_billiards(target[0], target[1], iters));
      const [vx, vy] = scene.decision;
      const best = Math.min(...scene.losses);
      play(scene, `cue velocity (${vx.toFixed(3)}, ${vy.toFixed(3)}), squared miss ${best.toExponential(2)}`);
    } catch (err) {
      status.textContent = `planning failed: ${err}`;
    }
  }, 10);
}

canvas.addEventListener("click", (ev) => {
  if (!view) return;
  const r = canvas.getBoundingClientRect();
  const x = (ev.clientX - r.left) / view.s + view.lo[0];
  const y = (canvas.height - (ev.clientY - r.top)) / view.s + view.lo[1];
  target = [x, y];
  status.textContent = `target (${x.toFixed(2)}, ${y.toFixed(2)}); press Plan`;
});

const mu = slider("mu");
const e = slider("e");

await init();
const select = document.getElementById("preset");
for (const name of JSON.parse(planar_presets())) select.add(new Option(name, name));
document.getElementById("run").addEventListener("click", runSimulation);
document.getElementById("plan").addEventListener("click", runPlan);
runSimulation();
