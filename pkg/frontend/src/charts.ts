/**
 * Dependency-free SVG chart renderers. Every displayed number is the exact
 * server-sent value via String(value) - no rounding, no recomputation.
 */

const SVG_NS = 'http://www.w3.org/2000/svg';

export function fmt(value: number | string | null | undefined): string {
  return value === null || value === undefined ? 'n/a' : String(value);
}

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

function svgText(x: number, y: number, content: string, cls = ''): SVGTextElement {
  const node = svgEl('text', { x, y, 'font-size': 10 });
  if (cls) node.setAttribute('class', cls);
  node.textContent = content;
  return node;
}

const PALETTE = ['#4e79a7', '#f28e2b', '#59a14f', '#e15759', '#b07aa1', '#76b7b2'];

/** Grouped bar chart: one group per coder, one bar per label. */
export function groupedBars(
  groups: { name: string; counts: Record<string, number> }[],
  labelNames: string[],
): SVGSVGElement {
  const barWidth = 18;
  const groupGap = 24;
  const groupWidth = labelNames.length * barWidth;
  const width = Math.max(200, groups.length * (groupWidth + groupGap) + groupGap);
  const height = 180;
  const plotHeight = 130;
  const maxCount = Math.max(1, ...groups.flatMap((g) => labelNames.map((l) => g.counts[l] ?? 0)));
  const svg = svgEl('svg', { width, height, class: 'chart grouped-bars' });
  groups.forEach((group, gi) => {
    const x0 = groupGap + gi * (groupWidth + groupGap);
    labelNames.forEach((label, li) => {
      const count = group.counts[label] ?? 0;
      const h = (count / maxCount) * plotHeight;
      const x = x0 + li * barWidth;
      const bar = svgEl('rect', {
        x,
        y: 20 + plotHeight - h,
        width: barWidth - 3,
        height: h,
        fill: PALETTE[li % PALETTE.length],
        class: 'bar',
      });
      bar.dataset.coder = group.name;
      bar.dataset.label = label;
      bar.dataset.value = fmt(count);
      svg.appendChild(bar);
      svg.appendChild(svgText(x, 16 + plotHeight - h, fmt(count), 'bar-value'));
    });
    svg.appendChild(svgText(x0, height - 8, group.name, 'group-name'));
  });
  return svg;
}

export interface BoxSummary {
  name: string;
  minimum: number;
  q1: number;
  median: number;
  q3: number;
  maximum: number;
  outliers: number[];
}

/** Horizontal box-and-whisker plot from server-computed five-number summaries. */
export function boxPlot(rows: BoxSummary[]): SVGSVGElement {
  const rowHeight = 46;
  const width = 420;
  const left = 90;
  const plotWidth = width - left - 20;
  const height = rows.length * rowHeight + 20;
  const svg = svgEl('svg', { width, height, class: 'chart box-plot' });
  const values = rows.flatMap((r) => [r.minimum, r.maximum, ...r.outliers]);
  const lo = Math.min(...values, 0);
  const hi = Math.max(...values, 1);
  const scale = (v: number) => left + ((v - lo) / (hi - lo || 1)) * plotWidth;
  rows.forEach((row, i) => {
    const cy = 20 + i * rowHeight + rowHeight / 2;
    const g = svgEl('g', { class: 'box-row' });
    (g as SVGGElement).dataset.coder = row.name;
    (g as SVGGElement).dataset.median = fmt(row.median);
    g.appendChild(svgText(4, cy + 3, row.name, 'coder-name'));
    g.appendChild(
      svgEl('line', { x1: scale(row.minimum), x2: scale(row.q1), y1: cy, y2: cy, stroke: '#555' }),
    );
    g.appendChild(
      svgEl('line', { x1: scale(row.q3), x2: scale(row.maximum), y1: cy, y2: cy, stroke: '#555' }),
    );
    g.appendChild(
      svgEl('rect', {
        x: scale(row.q1),
        y: cy - 10,
        width: Math.max(1, scale(row.q3) - scale(row.q1)),
        height: 20,
        fill: '#a7c7e7',
        stroke: '#555',
      }),
    );
    g.appendChild(
      svgEl('line', {
        x1: scale(row.median),
        x2: scale(row.median),
        y1: cy - 10,
        y2: cy + 10,
        stroke: '#1f3b57',
        'stroke-width': 2,
      }),
    );
    for (const outlier of row.outliers) {
      const dot = svgEl('circle', { cx: scale(outlier), cy, r: 3, fill: '#e15759', class: 'outlier' });
      dot.dataset.value = fmt(outlier);
      g.appendChild(dot);
    }
    svg.appendChild(g);
  });
  return svg;
}

export interface SeriesPoint {
  x: number;
  y: number;
}

/** Multi-series line chart (model metrics by batch). */
export function lineChart(series: { name: string; points: SeriesPoint[] }[]): SVGSVGElement {
  const width = 420;
  const height = 200;
  const left = 40;
  const bottom = 30;
  const plotW = width - left - 16;
  const plotH = height - bottom - 16;
  const svg = svgEl('svg', { width, height, class: 'chart line-chart' });
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const xMin = Math.min(...xs, 0);
  const xMax = Math.max(...xs, 1);
  const sx = (x: number) => left + ((x - xMin) / (xMax - xMin || 1)) * plotW;
  const sy = (y: number) => 16 + (1 - y) * plotH; // metrics live in [0, 1]
  svg.appendChild(svgEl('line', { x1: left, x2: left, y1: 16, y2: 16 + plotH, stroke: '#999' }));
  svg.appendChild(
    svgEl('line', { x1: left, x2: left + plotW, y1: 16 + plotH, y2: 16 + plotH, stroke: '#999' }),
  );
  series.forEach((s, si) => {
    const color = PALETTE[si % PALETTE.length];
    const path = s.points
      .map((p, i) => `${i === 0 ? 'M' : 'L'}${sx(p.x)},${sy(p.y)}`)
      .join(' ');
    svg.appendChild(svgEl('path', { d: path, stroke: color, fill: 'none', 'stroke-width': 1.5 }));
    for (const point of s.points) {
      const dot = svgEl('circle', { cx: sx(point.x), cy: sy(point.y), r: 2.5, fill: color });
      dot.dataset.series = s.name;
      dot.dataset.x = fmt(point.x);
      dot.dataset.value = fmt(point.y);
      svg.appendChild(dot);
    }
    svg.appendChild(svgText(left + 6 + si * 95, 12, s.name, 'series-name'));
  });
  return svg;
}

/** Heat map of the label-agreement matrix; cell text is the exact count. */
export function heatMap(labels: string[], counts: number[][]): SVGSVGElement {
  const cell = 44;
  const left = 80;
  const top = 30;
  const width = left + labels.length * cell + 10;
  const height = top + labels.length * cell + 10;
  const svg = svgEl('svg', { width, height, class: 'chart heat-map' });
  const maxCount = Math.max(1, ...counts.flat());
  labels.forEach((label, j) => {
    svg.appendChild(svgText(left + j * cell + 4, top - 8, label, 'col-label'));
  });
  counts.forEach((row, i) => {
    svg.appendChild(svgText(4, top + i * cell + cell / 2, labels[i], 'row-label'));
    row.forEach((count, j) => {
      const heat = count / maxCount;
      const rect = svgEl('rect', {
        x: left + j * cell,
        y: top + i * cell,
        width: cell - 2,
        height: cell - 2,
        fill: `rgba(225, 87, 89, ${0.08 + 0.92 * heat})`,
        class: 'heat-cell',
      });
      rect.dataset.row = labels[i];
      rect.dataset.col = labels[j];
      rect.dataset.value = fmt(count);
      svg.appendChild(rect);
      svg.appendChild(svgText(left + j * cell + cell / 2 - 6, top + i * cell + cell / 2 + 4, fmt(count), 'cell-value'));
    });
  });
  return svg;
}
