import init, { errorCurve, denoiseSamples, coverage } from "./pkg/far_web.js";

const $ = (id) => document.getElementById(id);

function drawErrorCurve() {
  const px = Number($("px").value);
  $("px-val").textContent = `${px} px`;
  const pts = JSON.parse(errorCurve(px, 150, 150));
  const c = $("error-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 30;
  const ymax = Math.max(...pts.map((p) => Math.max(p.lateral, p.bin_width)));
  const sx = (d) => pad + (d / 150) * (c.width - 2 * pad);
  const sy = (v) => c.height - pad - (v / ymax) * (c.height - 2 * pad);
  g.strokeStyle = "#888";
  g.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  g.fillStyle = "#000";
  g.fillText("0 m", pad, c.height - pad + 14);
  g.fillText("150 m", c.width - pad - 24, c.height - pad + 14);
  g.fillText(`${ymax.toFixed(2)} m`, 2, pad + 4);
  for (const [key, color] of [["lateral", "#c33"], ["bin_width", "#36c"]]) {
    g.strokeStyle = color;
    g.beginPath();
    pts.forEach((p, i) => (i ? g.lineTo : g.moveTo).call(g, sx(p.depth), sy(p[key])));
    g.stroke();
  }
  g.fillStyle = "#c33";
  g.fillText("lateral displacement", pad + 8, pad + 14);
  g.fillStyle = "#36c";
  g.fillText("depth bin width", pad + 8, pad + 28);
}

function drawDenoise() {
  const x = Number($("dn-x").value);
  const v = JSON.parse(
    denoiseSamples(x, 0, Number($("dn-yaw").value), $("dn-form").value, Number($("dn-groups").value), 7),
  );
  const c = $("dn-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const half = Math.max(6, v.negative_radius * 1.3);
  const s = c.width / (2 * half);
  const tx = (p) => [c.width / 2 - p[1] * s, c.height / 2 - (p[0] - x) * s];
  g.strokeStyle = "#ddd";
  g.beginPath();
  g.arc(c.width / 2, c.height / 2, v.negative_radius * s, 0, 2 * Math.PI);
  g.stroke();
  g.strokeStyle = "#000";
  g.beginPath();
  [0, 1, 3, 2].forEach((i, k) => {
    const [u, w] = tx(v.corners[i]);
    k ? g.lineTo(u, w) : g.moveTo(u, w);
  });
  g.closePath();
  g.stroke();
  const dot = (p, color) => {
    const [u, w] = tx(p);
    g.fillStyle = color;
    g.fillRect(u - 2, w - 2, 4, 4);
  };
  v.positives.forEach((p) => dot(p, "#2a2"));
  v.negatives.forEach((p) => dot(p, "#c33"));
  g.fillStyle = "#000";
  g.fillText(`range ${x} m, negative radius ${v.negative_radius.toFixed(2)} m (forward is up)`, 6, 14);
}

function runCoverage() {
  const out = $("cov-out");
  try {
    const rows = JSON.parse(coverage(Number($("cov-seed").value), Number($("cov-n").value), Number($("cov-obj").value)));
    const fmt = (x) => (Number.isFinite(x) ? x.toFixed(3) : "n/a");
    out.innerHTML =
      "<table><tr><th>variant</th><th>0-50 m</th><th>50-150 m</th><th>2D recall 50-150 m</th></tr>" +
      rows.map((r) => `<tr><td>${r.variant}</td><td>${fmt(r.near)}</td><td>${fmt(r.far)}</td><td>${fmt(r.recall_2d_far)}</td></tr>`).join("") +
      "</table>";
  } catch (e) {
    out.innerHTML = `<p class="err">${e}</p>`;
  }
}

await init();
$("px").addEventListener("input", drawErrorCurve);
for (const id of ["dn-x", "dn-yaw", "dn-form", "dn-groups"]) $(id).addEventListener("input", drawDenoise);
$("cov-run").addEventListener("click", runCoverage);
drawErrorCurve();
drawDenoise();
runCoverage();
