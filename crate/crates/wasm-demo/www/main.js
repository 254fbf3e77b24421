import init, { Demo } from "./pkg/flipsim_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");

let demo = null;
let playing = false;
let yaw = 0.6;
const pitch = 0.35;

function reset() {
  playing = false;
  $("play").textContent = "Play";
  $("error").textContent = "";
  try {
    demo?.free();
    demo = new Demo($("scene").value, Number($("res").value), $("solver").value);
  } catch (e) {
    demo = null;
    $("error").textContent = String(e);
  }
  refresh();
}

function step() {
  if (!demo) return;
  try {
    demo.step(1);
  } catch (e) {
    playing = false;
    $("error").textContent = String(e);
  }
  refresh();
}

function refresh() {
  if (!demo) {
    $("status").textContent = "";
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  let status = demo.status();
  if ($("surface").checked) {
    const tris = demo.remesh(Number($("per-cell").value));
    status += ` | ${tris} triangles`;
  }
  $("status").textContent = status;
  draw();
}

// unit cube centred on the canvas; returns [sx, sy, depth]
function project(x, y, z) {
  const cx = x - 0.5, cy = y - 0.5, cz = z - 0.5;
  const rx = Math.cos(yaw) * cx + Math.sin(yaw) * cz;
  const rz = -Math.sin(yaw) * cx + Math.cos(yaw) * cz;
  const ry = Math.cos(pitch) * cy - Math.sin(pitch) * rz;
  const d = Math.sin(pitch) * cy + Math.cos(pitch) * rz;
  const s = canvas.width * 0.62;
  return [canvas.width / 2 + s * rx, canvas.height / 2 - s * ry, d];
}

function drawBox() {
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  for (let a = 0; a < 8; a++) {
    for (let axis = 0; axis < 3; axis++) {
      const b = a | (1 << axis);
      if (b === a) continue;
      const p = project(a & 1, (a >> 1) & 1, (a >> 2) & 1);
      const q = project(b & 1, (b >> 1) & 1, (b >> 2) & 1);
      ctx.moveTo(p[0], p[1]);
      ctx.lineTo(q[0], q[1]);
    }
  }
  ctx.stroke();
}

function drawParticles() {
  const pos = demo.positions();
  for (let i = 0; i < pos.length; i += 3) {
    const [sx, sy, d] = project(pos[i], pos[i + 1], pos[i + 2]);
    const shade = Math.round(120 + 100 * (d + 0.7));
    ctx.fillStyle = `rgb(30, ${Math.min(shade, 200)}, 230)`;
    ctx.fillRect(sx - 1, sy - 1, 2, 2);
  }
}

function drawMesh() {
  const v = demo.mesh_vertices();
  const n = demo.mesh_normals();
  const idx = demo.mesh_indices();
  const screen = [];
  for (let i = 0; i < v.length; i += 3) screen.push(project(v[i], v[i + 1], v[i + 2]));
  // light from the viewer's upper left, in world space
  const light = [-Math.sin(yaw) * 0.5 - 0.3, 0.8, Math.cos(yaw) * 0.5];
  const len = Math.hypot(...light);
  const tris = [];
  for (let t = 0; t < idx.length; t += 3) {
    const [a, b, c] = [idx[t], idx[t + 1], idx[t + 2]];
    let lum = 0;
    for (const k of [a, b, c]) {
      lum += (n[3 * k] * light[0] + n[3 * k + 1] * light[1] + n[3 * k + 2] * light[2]) / len;
    }
    tris.push({ a, b, c, depth: screen[a][2] + screen[b][2] + screen[c][2], lum: lum / 3 });
  }
  tris.sort((p, q) => q.depth - p.depth);
  for (const { a, b, c, lum } of tris) {
    const k = 0.35 + 0.65 * Math.max(lum, 0);
    ctx.fillStyle = `rgb(${Math.round(40 * k)}, ${Math.round(140 * k)}, ${Math.round(235 * k)})`;
    ctx.beginPath();
    ctx.moveTo(screen[a][0], screen[a][1]);
    ctx.lineTo(screen[b][0], screen[b][1]);
    ctx.lineTo(screen[c][0], screen[c][1]);
    ctx.closePath();
    ctx.fill();
  }
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  drawBox();
  if ($("surface").checked) drawMesh();
  else drawParticles();
}

function loop() {
  if (playing) step();
  requestAnimationFrame(loop);
}

let dragX = null;
canvas.addEventListener("pointerdown", (e) => { dragX = e.clientX; canvas.setPointerCapture(e.pointerId); });
canvas.addEventListener("pointerup", () => { dragX = null; });
canvas.addEventListener("pointermove", (e) => {
  if (dragX === null || !demo) return;
  yaw += (e.clientX - dragX) * 0.01;
  dragX = e.clientX;
  draw();
});

$("setup").addEventListener("submit", (e) => { e.preventDefault(); reset(); });
$("step").addEventListener("click", step);
$("play").addEventListener("click", () => {
  playing = !playing;
  $("play").textContent = playing ? "Pause" : "Play";
});
$("surface").addEventListener("change", refresh);
$("per-cell").addEventListener("change", refresh);

await init();
reset();
loop();
