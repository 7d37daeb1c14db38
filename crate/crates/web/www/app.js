// Plain-ES-module glue for the revnorm demo; no framework, one canvas.
import init, { demo_build, demo_drift_scan, demo_trajectory } from "./pkg/revnorm_web.js";

const $ = (id) => document.getElementById(id);
const status = (msg, err = false) => {
  $("status").textContent = msg;
  $("status").className = err ? "err" : "";
};

function config() {
  return JSON.stringify({
    k: Number($("k").value),
    s: Number($("s").value),
    r: Number($("r").value),
    seed: Number($("seed").value),
    lambda: Number($("lambda").value),
    nu: Number($("nu").value),
    eps: Number($("eps").value),
    t_max: Number($("tmax").value),
  });
}

function call(fn) {
  const out = JSON.parse(fn(config()));
  if (out.error) throw new Error(out.error);
  return out;
}

// ---- tiny canvas plotting -------------------------------------------------

const COLORS = ["#d95f02", "#1b9e77", "#7570b3"];

function canvasCtx() {
  const canvas = $("plot");
  canvas.hidden = false;
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px sans-serif";
  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#888";
  return ctx;
}

const MARGIN = { l: 70, r: 15, t: 15, b: 40 };

function frame(ctx, xlab, ylab) {
  const w = ctx.canvas.width, h = ctx.canvas.height;
  ctx.strokeRect(MARGIN.l, MARGIN.t, w - MARGIN.l - MARGIN.r, h - MARGIN.t - MARGIN.b);
  ctx.textAlign = "center";
  ctx.fillText(xlab, (MARGIN.l + w - MARGIN.r) / 2, h - 8);
  ctx.save();
  ctx.translate(14, (MARGIN.t + h - MARGIN.b) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylab, 0, 0);
  ctx.restore();
}

function scales(ctx, xmin, xmax, ymin, ymax) {
  const w = ctx.canvas.width, h = ctx.canvas.height;
  const sx = (x) => MARGIN.l + ((x - xmin) / (xmax - xmin)) * (w - MARGIN.l - MARGIN.r);
  const sy = (y) => h - MARGIN.b - ((y - ymin) / (ymax - ymin)) * (h - MARGIN.t - MARGIN.b);
  return [sx, sy];
}

function polyline(ctx, xs, ys, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.6;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.lineWidth = 1;
}

function legend(ctx, entries) {
  entries.forEach(([name, color], i) => {
    ctx.fillStyle = color;
    ctx.fillRect(MARGIN.l + 12, MARGIN.t + 10 + 18 * i, 12, 4);
    ctx.textAlign = "left";
    ctx.fillText(name, MARGIN.l + 30, MARGIN.t + 16 + 18 * i);
  });
  ctx.fillStyle = "#888";
}

function yTicks(ctx, ymin, ymax, sy, fmt) {
  ctx.textAlign = "right";
  for (let i = 0; i <= 4; i++) {
    const v = ymin + ((ymax - ymin) * i) / 4;
    ctx.fillText(fmt(v), MARGIN.l - 6, sy(v) + 4);
  }
}

function xTicks(ctx, xmin, xmax, sx, fmt) {
  ctx.textAlign = "center";
  const h = ctx.canvas.height;
  for (let i = 0; i <= 4; i++) {
    const v = xmin + ((xmax - xmin) * i) / 4;
    ctx.fillText(fmt(v), sx(v), h - MARGIN.b + 16);
  }
}

// ---- views ----------------------------------------------------------------

function showBuild(out) {
  const rows = out.orders
    .map(
      (o) => `<tr><td>${o.order}</td><td>${o.terms}</td>
        <td>${o.min_divisor == null ? "—" : o.min_divisor.toExponential(2)}</td>
        <td>${o.max_abs_coeff.toExponential(2)}</td>
        <td>${o.gamma0_constant.toExponential(2)}</td></tr>`
    )
    .join("");
  $("build-out").innerHTML = `
    <table>
      <tr><th>order k</th><th>terms of N<sub>s,k</sub></th>
          <th>min |&Omega;|</th><th>max |coeff|</th><th>class constant (&gamma;=0)</th></tr>
      ${rows}
    </table>
    <p>basis: ${out.dim} modes; Taylor fields: degrees
       [${out.field_degrees.join(", ")}] with [${out.field_terms.join(", ")}] terms.</p>`;
  $("plot").hidden = true;
  $("caption").textContent = "";
}

function showScan(out) {
  $("build-out").innerHTML = "";
  const lx = out.eps.map(Math.log10);
  const series = [out.drift, out.gap].map((col) => col.map((v) => Math.log10(Math.max(v, 1e-300))));
  const ymin = Math.min(...series.flat()) - 0.3;
  const ymax = Math.max(...series.flat()) + 0.3;
  const ctx = canvasCtx();
  const [sx, sy] = scales(ctx, Math.min(...lx), Math.max(...lx), ymin, ymax);
  frame(ctx, "log10 epsilon", "log10 value");
  xTicks(ctx, Math.min(...lx), Math.max(...lx), sx, (v) => v.toFixed(1));
  yTicks(ctx, ymin, ymax, sy, (v) => v.toFixed(0));
  polyline(ctx, lx, series[0], sx, sy, COLORS[0]);
  polyline(ctx, lx, series[1], sx, sy, COLORS[1]);
  legend(ctx, [
    [`|drift|  (slope ${out.drift_slope?.toFixed(2) ?? "n/a"})`, COLORS[0]],
    [`|N - eps^2|  (slope ${out.gap_slope?.toFixed(2) ?? "n/a"})`, COLORS[1]],
  ]);
  $("caption").textContent =
    `Expected slopes: r+1 for the drift and 3 for the norm gap (when the cubic part is nonzero).`;
}

function showTrajectory(out) {
  $("build-out").innerHTML = "";
  const vals = [...out.norm_rel, ...out.pseudo_rel];
  const span = Math.max(1e-12, ...vals.map(Math.abs)) * 1.1;
  const ctx = canvasCtx();
  const [sx, sy] = scales(ctx, out.t[0], out.t[out.t.length - 1], -span, span);
  frame(ctx, "t", "relative excursion");
  xTicks(ctx, out.t[0], out.t[out.t.length - 1], sx, (v) => v.toFixed(0));
  yTicks(ctx, -span, span, sy, (v) => v.toExponential(1));
  polyline(ctx, out.t, out.norm_rel, sx, sy, COLORS[0]);
  polyline(ctx, out.t, out.pseudo_rel, sx, sy, COLORS[1]);
  legend(ctx, [
    ["||z(t)||_s^2 / ||z(0)||_s^2 - 1", COLORS[0]],
    ["N(z(t)) / N(z(0)) - 1", COLORS[1]],
  ]);
  $("caption").textContent =
    `sup ||z(t)||_s / eps = ${out.sup_ratio.toFixed(6)}; ` +
    `relative pseudo-norm drift over the horizon: ${out.delta_n_rel.toExponential(2)}. ` +
    `The bare norm oscillates at order eps; the pseudo norm stays flat.`;
}

function wire(id, fn, view, label) {
  $(id).addEventListener("click", () => {
    status(`${label}...`);
    // let the status paint before the (synchronous) wasm call
    setTimeout(() => {
      try {
        const t0 = performance.now();
        const out = call(fn);
        view(out);
        status(`${label} done in ${(performance.now() - t0).toFixed(0)} ms`);
      } catch (e) {
        status(e.message, true);
      }
    }, 20);
  });
}

init().then(() => {
  wire("btn-build", demo_build, showBuild, "build");
  wire("btn-scan", demo_drift_scan, showScan, "drift scan");
  wire("btn-traj", demo_trajectory, showTrajectory, "integration");
  status("wasm module loaded");
});
