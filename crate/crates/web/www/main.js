import init, { mean_profile, robin_semigroup, ssep_snapshots } from "./pkg/slowbond_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(w / 2, 0);
  ctx.lineTo(w / 2, h);
  ctx.stroke();
}

// xs in [x0, x1], each series a list of y values in [y0, y1]
function lines(canvas, xs, series, x0, x1, y0, y1) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  axes(ctx, w, h);
  const px = (x) => ((x - x0) / (x1 - x0)) * w;
  const py = (y) => h - ((y - y0) / (y1 - y0)) * h;
  ["#888", "#c33"].forEach((color, k) => {
    const ys = series[k];
    if (!ys) return;
    ctx.strokeStyle = color;
    ctx.beginPath();
    xs.forEach((x, i) => {
      // break the line across the origin, where values may jump
      if (i === 0 || (xs[i - 1] <= 0 && x > 0)) ctx.moveTo(px(x), py(ys[i]));
      else ctx.lineTo(px(x), py(ys[i]));
    });
    ctx.stroke();
  });
}

function guard(f) {
  return () => {
    $("err").textContent = "";
    try {
      f();
    } catch (e) {
      $("err").textContent = String(e);
    }
  };
}

function drawMean() {
  const v = mean_profile($("mp-kind").value, num("mp-n"), num("mp-alpha"), num("mp-t"));
  const xs = [], ys = [];
  for (let i = 0; i < v.length; i += 2) {
    xs.push(v[i]);
    ys.push(v[i + 1]);
  }
  lines($("mp"), xs, [null, ys], -3, 3, 0, 1);
}

function drawSemigroup() {
  const v = robin_semigroup(num("sg-alpha"), num("sg-jump"), num("sg-t"), 241);
  const xs = [], f = [], tf = [];
  for (let i = 0; i < v.length; i += 3) {
    xs.push(v[i]);
    f.push(v[i + 1]);
    tf.push(v[i + 2]);
  }
  const lo = Math.min(...f, ...tf), hi = Math.max(...f, ...tf);
  const pad = 0.05 * (hi - lo || 1);
  lines($("sg"), xs, [f, tf], -3, 3, lo - pad, hi + pad);
}

function drawSnapshots() {
  const rows = 60, n = num("sn-n");
  const bits = ssep_snapshots($("sn-kind").value, n, num("sn-alpha"), num("sn-t"), rows, BigInt(num("sn-seed")));
  const width = 4 * n, height = rows + 1;
  const canvas = $("sn");
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(width, height);
  bits.forEach((b, i) => {
    const c = b ? 20 : 240;
    img.data.set([c, c, c, 255], 4 * i);
  });
  const off = new OffscreenCanvas(width, height);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  ctx.moveTo(canvas.width / 2, 0);
  ctx.lineTo(canvas.width / 2, canvas.height);
  ctx.stroke();
}

await init();
$("mp-go").onclick = guard(drawMean);
$("sg-go").onclick = guard(drawSemigroup);
$("sn-go").onclick = guard(drawSnapshots);
guard(drawMean)();
guard(drawSemigroup)();
guard(drawSnapshots)();
