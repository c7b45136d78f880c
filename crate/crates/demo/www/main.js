import init, { Demo } from "./pkg/sensor_select_demo.js";

const MESH_N = 33;
const GRID_N = 15;
const MAP_N = 21;

const $ = (id) => document.getElementById(id);
const status = $("status");

// Blue → white → red colour ramp for t in [0, 1].
function ramp(t) {
  t = Math.min(1, Math.max(0, t));
  if (t < 0.5) {
    const s = t / 0.5;
    return [Math.round(40 + 215 * s), Math.round(80 + 175 * s), 255];
  }
  const s = (t - 0.5) / 0.5;
  return [255, Math.round(255 - 175 * s), Math.round(255 - 215 * s)];
}

// Paints an n × n row-major field (first row at the bottom) onto a canvas.
function paint(canvas, values, n, lo, hi) {
  const img = new ImageData(n, n);
  for (let row = 0; row < n; row++) {
    for (let col = 0; col < n; col++) {
      const v = values[row * n + col];
      const [r, g, b] = ramp(hi > lo ? (v - lo) / (hi - lo) : 0.5);
      const p = 4 * ((n - 1 - row) * n + col);
      img.data.set([r, g, b, 255], p);
    }
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = n > 40;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function toCanvas(canvas, x1, x2) {
  return [x1 * canvas.width, (1 - x2) * canvas.height];
}

async function main() {
  await init();
  const t0 = performance.now();
  const demo = new Demo(MESH_N, GRID_N);
  const centers = demo.libraryCenters();
  status.textContent = `mesh ${MESH_N}×${MESH_N}, ${centers.length / 2} candidate sensors, ` +
    `setup ${((performance.now() - t0) / 1000).toFixed(1)} s`;

  let selection = { indices: [], centers: [], betas: [] };

  function theta() {
    return [10 ** +$("theta1").value, 10 ** +$("theta2").value];
  }

  function drawField() {
    const [t1, t2] = theta();
    $("theta1-out").textContent = t1.toFixed(2);
    $("theta2-out").textContent = t2.toFixed(2);
    const m = [...document.querySelectorAll("input.m")].map((el) => {
      el.nextElementSibling.textContent = (+el.value).toFixed(2);
      return +el.value;
    });
    let u;
    try {
      u = demo.temperature(t1, t2, m);
    } catch (e) {
      status.textContent = String(e);
      return;
    }
    const n = demo.meshN();
    let lo = Math.min(...u), hi = Math.max(...u);
    const canvas = $("field");
    paint(canvas, u, n, lo, hi);
    const ctx = canvas.getContext("2d");
    ctx.fillStyle = "rgba(0,0,0,0.35)";
    for (let k = 0; k < centers.length; k += 2) {
      const [x, y] = toCanvas(canvas, centers[k], centers[k + 1]);
      ctx.fillRect(x - 1, y - 1, 2, 2);
    }
    ctx.strokeStyle = "#000";
    ctx.lineWidth = 2;
    selection.centers.forEach(([x1, x2], i) => {
      const [x, y] = toCanvas(canvas, x1, x2);
      ctx.beginPath();
      ctx.arc(x, y, 6, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.fillStyle = "#000";
      ctx.fillText(String(i + 1), x + 7, y - 7);
      ctx.fillStyle = "rgba(0,0,0,0.35)";
    });
    ctx.fillStyle = "#000";
    ctx.fillText(`min ${lo.toFixed(3)}  max ${hi.toFixed(3)}`, 6, 14);
  }

  function drawBetaMap() {
    const canvas = $("beta-map");
    const beta = demo.betaMap(Uint32Array.from(selection.indices), MAP_N);
    paint(canvas, beta, MAP_N, 0, 1);
    let k = 0;
    beta.forEach((v, i) => { if (v < beta[k]) k = i; });
    const cell = canvas.width / MAP_N;
    const [col, row] = [k % MAP_N, Math.floor(k / MAP_N)];
    const ctx = canvas.getContext("2d");
    ctx.strokeStyle = "#fff";
    ctx.lineWidth = 2;
    ctx.strokeRect(col * cell, (MAP_N - 1 - row) * cell, cell, cell);
    ctx.fillStyle = "#000";
    ctx.fillText(`min β ${beta[k].toFixed(3)}`, 6, 14);
  }

  function runSelect() {
    const target = +$("beta-target").value;
    const kMax = +$("k-max").value;
    const t = performance.now();
    try {
      selection = JSON.parse(demo.select(target, kMax));
    } catch (e) {
      status.textContent = String(e);
      return;
    }
    const ms = performance.now() - t;
    const betas = selection.betas.map((b) => b.toFixed(3)).join(", ");
    $("trace").textContent = `${selection.indices.length} sensors in ${ms.toFixed(0)} ms; ` +
      `worst-case β: ${betas}` + (selection.target_reached ? " (target reached)" : "");
    drawField();
    drawBetaMap();
  }

  for (const el of document.querySelectorAll("input[type=range]")) {
    el.addEventListener("input", drawField);
  }
  $("select").addEventListener("click", runSelect);
  $("clear").addEventListener("click", () => {
    selection = { indices: [], centers: [], betas: [] };
    $("trace").textContent = "";
    drawField();
    drawBetaMap();
  });
  drawField();
  drawBetaMap();
}

main().catch((e) => { status.textContent = String(e); });
