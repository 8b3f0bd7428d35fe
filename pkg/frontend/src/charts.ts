// Minimal canvas line charts: three stacked panels (weights, per-channel
// MI with its saturation guide, sum rate + power cap). No charting
// dependency; redraws are batched per animation frame by the caller.

export const CHANNEL_COLORS = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
    "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

export interface Guide {
    y: number;
    color: string;
    label?: string;
}

export interface SeriesGroup {
    x: number[];
    ys: number[][];
    colors: string[];
    labels: string[];
    axis?: "left" | "right";
}

export interface PanelSpec {
    title: string;
    yMin?: number;
    yMax?: number;
    rightLabel?: string;
    guides?: Guide[];
}

const MARGIN = { top: 22, right: 46, bottom: 20, left: 46 };

function niceRange(lo: number, hi: number): [number, number] {
    if (!isFinite(lo) || !isFinite(hi)) return [0, 1];
    if (hi - lo < 1e-9) return [lo - 0.5, hi + 0.5];
    const pad = (hi - lo) * 0.06;
    return [lo - pad, hi + pad];
}

export function extent(values: number[]): [number, number] {
    let lo = Infinity;
    let hi = -Infinity;
    for (const v of values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    return [lo, hi];
}

export class LinePanel {
    private ctx: CanvasRenderingContext2D;

    constructor(private readonly canvas: HTMLCanvasElement,
                private readonly spec: PanelSpec) {
        const ctx = canvas.getContext("2d");
        if (ctx === null) throw new Error("canvas 2d context unavailable");
        this.ctx = ctx;
    }

    render(groups: SeriesGroup[], gapSteps: readonly number[] = []): void {
        const { ctx, canvas, spec } = this;
        const w = canvas.width;
        const h = canvas.height;
        const plotW = w - MARGIN.left - MARGIN.right;
        const plotH = h - MARGIN.top - MARGIN.bottom;
        ctx.clearRect(0, 0, w, h);
        ctx.font = "11px system-ui, sans-serif";
        ctx.fillStyle = "#ddd";
        ctx.fillText(spec.title, MARGIN.left, 14);
        const xs = groups.find((g) => g.x.length > 0)?.x ?? [];
        if (xs.length === 0) {
            ctx.fillStyle = "#888";
            ctx.fillText("waiting for frames...", MARGIN.left, MARGIN.top + plotH / 2);
            return;
        }
        const [x0, x1] = extent(xs);
        const xSpan = Math.max(x1 - x0, 1);

        const leftValues: number[] = [];
        const rightValues: number[] = [];
        for (const g of groups) {
            const sink = g.axis === "right" ? rightValues : leftValues;
            for (const ys of g.ys) sink.push(...ys);
        }
        for (const guide of spec.guides ?? []) leftValues.push(guide.y);
        let [lo, hi] = niceRange(...extent(leftValues));
        if (spec.yMin !== undefined) lo = spec.yMin;
        if (spec.yMax !== undefined) hi = spec.yMax;
        const [rLo, rHi] = rightValues.length ? niceRange(...extent(rightValues)) : [0, 1];

        const px = (x: number) => MARGIN.left + ((x - x0) / xSpan) * plotW;
        const py = (y: number) => MARGIN.top + (1 - (y - lo) / (hi - lo)) * plotH;
        const pyR = (y: number) => MARGIN.top + (1 - (y - rLo) / (rHi - rLo)) * plotH;

        // frame + horizontal grid with left labels
        ctx.strokeStyle = "#333";
        ctx.strokeRect(MARGIN.left, MARGIN.top, plotW, plotH);
        ctx.fillStyle = "#999";
        const ticks = 4;
        for (let i = 0; i <= ticks; i++) {
            const yv = lo + ((hi - lo) * i) / ticks;
            const yy = py(yv);
            ctx.strokeStyle = "#2a2a2a";
            ctx.beginPath();
            ctx.moveTo(MARGIN.left, yy);
            ctx.lineTo(MARGIN.left + plotW, yy);
            ctx.stroke();
            ctx.fillText(yv.toFixed(2), 4, yy + 4);
        }
        if (rightValues.length) {
            for (let i = 0; i <= ticks; i++) {
                const yv = rLo + ((rHi - rLo) * i) / ticks;
                ctx.fillText(yv.toFixed(1), MARGIN.left + plotW + 6, pyR(yv) + 4);
            }
            if (spec.rightLabel) ctx.fillText(spec.rightLabel, MARGIN.left + plotW + 6, 14);
        }
        // x labels: first and last step
        ctx.fillText(String(x0), MARGIN.left, h - 6);
        ctx.fillText(String(x1), MARGIN.left + plotW - 24, h - 6);

        for (const guide of spec.guides ?? []) {
            ctx.strokeStyle = guide.color;
            ctx.setLineDash([5, 4]);
            ctx.beginPath();
            ctx.moveTo(MARGIN.left, py(guide.y));
            ctx.lineTo(MARGIN.left + plotW, py(guide.y));
            ctx.stroke();
            ctx.setLineDash([]);
            if (guide.label) {
                ctx.fillStyle = guide.color;
                ctx.fillText(guide.label, MARGIN.left + 4, py(guide.y) - 3);
            }
        }

        for (const gap of gapSteps) {
            if (gap < x0 || gap > x1) continue;
            ctx.strokeStyle = "#775";
            ctx.setLineDash([2, 3]);
            ctx.beginPath();
            ctx.moveTo(px(gap), MARGIN.top);
            ctx.lineTo(px(gap), MARGIN.top + plotH);
            ctx.stroke();
            ctx.setLineDash([]);
        }

        for (const g of groups) {
            const proj = g.axis === "right" ? pyR : py;
            g.ys.forEach((series, idx) => {
                ctx.strokeStyle = g.colors[idx % g.colors.length];
                ctx.lineWidth = 1.4;
                ctx.beginPath();
                series.forEach((v, i) => {
                    const xx = px(g.x[i]);
                    const yy = proj(v);
                    if (i === 0) ctx.moveTo(xx, yy);
                    else ctx.lineTo(xx, yy);
                });
                ctx.stroke();
            });
        }
        // legend, single row
        let lx = MARGIN.left + 60;
        for (const g of groups) {
            g.labels.forEach((label, idx) => {
                ctx.fillStyle = g.colors[idx % g.colors.length];
                ctx.fillRect(lx, 8, 8, 8);
                ctx.fillStyle = "#bbb";
                ctx.fillText(label, lx + 11, 15);
                lx += 11 + 7 * label.length + 10;
            });
        }
    }
}
