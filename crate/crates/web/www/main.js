import init, { burgers, eos_split, beam } from "./pkg/pc2_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Draws several series sharing one x axis. Each series is {x, y, color, dash}.
function plot(canvas, series, xlabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 48;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => s.x), ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y1 - y0 < 1e-12) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const sy = (y) => h - pad + ((y0 - y) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 20, h - pad + 14);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(xlabel, w / 2, h - 10);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ? [5, 4] : []);
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(s.y[i])) : ctx.moveTo(sx(x), sy(s.y[i]))));
    ctx.stroke();
    for (const [x, y] of s.points ?? []) {
      ctx.fillStyle = s.color;
      ctx.fillRect(sx(x) - 2, sy(y) - 2, 4, 4);
    }
  }
  ctx.setLineDash([]);
}

// Runs `f` after the button repaints, so the page shows it is busy.
function wire(button, out, f) {
  $(button).onclick = () => {
    $(button).disabled = true;
    $(out).textContent = "running…";
    setTimeout(() => {
      const t = performance.now();
      try {
        $(out).textContent = f() + `\n${((performance.now() - t) / 1000).toFixed(2)} s`;
      } catch (e) {
        $(out).textContent = "error: " + (e.message ?? e);
      }
      $(button).disabled = false;
    }, 20);
  };
}

await init();

wire("b-run", "b-out", () => {
  const r = JSON.parse(burgers(num("b-nu"), num("b-p"), num("b-n")));
  const series = r.slices.flatMap((s) => [
    { x: r.x, y: s.model, color: "#c33" },
    { x: r.x, y: s.reference, color: "#333", dash: true },
  ]);
  plot($("b-plot"), series, "x  (t = 0, 0.1, 0.2, 0.3)");
  return `MSE ${r.mse.toExponential(3)}   basis ${r.basis}   iterations ${r.iterations}\n` +
    `L_PDE ${r.losses.pde.toExponential(2)}   L_IC ${r.losses.ic.toExponential(2)}   L_BC ${r.losses.bc.toExponential(2)}`;
});

wire("e-run", "e-out", () => {
  const r = JSON.parse(eos_split(num("e-seed"), num("e-split")));
  const series = r.isotherms.flatMap((iso) => [
    { x: r.V, y: iso.truth, color: "#333", dash: true },
    { x: r.V, y: iso.baseline, color: "#36c" },
    { x: r.V, y: iso.pc2, color: "#c33" },
  ]);
  series.push({ x: [], y: [], color: "#000", points: r.train.map((p) => [p.V, p.P]) });
  plot($("e-plot"), series, "V  (isotherms at lowest, middle and highest T; squares are training points)");
  const pct = (v) => (100 * v).toFixed(1) + "%";
  return `relative L2 error of P   PC² ${r.errors.pc2.toFixed(4)}   baseline ${r.errors.baseline.toFixed(4)}\n` +
    `grid points violating ∂P/∂V ≤ 0   PC² ${pct(r.violations.pc2)}   baseline ${pct(r.violations.baseline)}\n` +
    `min of -∂P/∂V on a 60×60 grid   PC² ${r.min_margin.pc2.toExponential(2)}   baseline ${r.min_margin.baseline.toExponential(2)}`;
});

wire("m-run", "m-out", () => {
  const r = JSON.parse(beam(num("m-cov"), num("m-l"), num("m-k"), num("m-e")));
  plot($("m-plot"), [
    { x: r.pc2.pdf.x, y: r.pc2.pdf.y, color: "#c33" },
    { x: r.mcs.pdf.x, y: r.mcs.pdf.y, color: "#333", dash: true },
  ], "w(L/2)");
  return `mean  PC² ${r.pc2.mean.toExponential(4)}   MC ${r.mcs.mean.toExponential(4)}\n` +
    `std   PC² ${r.pc2.std.toExponential(4)}   MC ${r.mcs.std.toExponential(4)}\n` +
    `KS ${r.ks.toFixed(4)}   basis ${r.basis} of ${r.full_basis} after ${r.outer_iterations} LAR rounds   ` +
    `KL variance captured ${(100 * r.captured_variance).toFixed(1)}%`;
});
