/** Canvas strip charts (commanded vs actual) and the top-down path trace. */

export interface Series {
  label: string;
  color: string;
  values: (number | null)[];
}

export function drawStripChart(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  series: Series[],
  yRange: [number, number],
  title: string,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  const [lo, hi] = yRange;
  const yOf = (v: number) => height - ((v - lo) / (hi - lo)) * height;
  // zero line
  ctx.strokeStyle = "#2c3440";
  ctx.beginPath();
  ctx.moveTo(0, yOf(0));
  ctx.lineTo(width, yOf(0));
  ctx.stroke();
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let started = false;
    const n = s.values.length;
    for (let i = 0; i < n; i++) {
      const v = s.values[i];
      if (v === null || Number.isNaN(v)) {
        started = false;
        continue;
      }
      const x = (i / Math.max(1, n - 1)) * width;
      if (!started) {
        ctx.moveTo(x, yOf(v));
        started = true;
      } else {
        ctx.lineTo(x, yOf(v));
      }
    }
    ctx.stroke();
  }
  ctx.fillStyle = "#9fb0c3";
  ctx.font = "12px sans-serif";
  ctx.fillText(title, 6, 14);
}

export function drawPathTrace(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  path: [number, number][],
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  if (path.length === 0) return;
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const [x, y] of path) {
    minX = Math.min(minX, x); maxX = Math.max(maxX, x);
    minY = Math.min(minY, y); maxY = Math.max(maxY, y);
  }
  const span = Math.max(maxX - minX, maxY - minY, 1.0);
  const cx = (minX + maxX) / 2, cy = (minY + maxY) / 2;
  const scale = (Math.min(width, height) * 0.9) / span;
  // world x forward is drawn up-screen, world y left is drawn left-screen
  const px = (x: number, y: number): [number, number] => [
    width / 2 - (y - cy) * scale,
    height / 2 - (x - cx) * scale,
  ];
  ctx.strokeStyle = "#58a6ff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  path.forEach(([x, y], i) => {
    const [sx, sy] = px(x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.stroke();
  const [hx, hy] = px(path[path.length - 1][0], path[path.length - 1][1]);
  ctx.fillStyle = "#f2cc60";
  ctx.beginPath();
  ctx.arc(hx, hy, 4, 0, 2 * Math.PI);
  ctx.fill();
}
