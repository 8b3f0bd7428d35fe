// Telemetry frame handling: the stream and the JSONL log share one flat
// schema (step, lambda_1.., P_1.., mi_1.., w_1.., p_total, sum_mi,
// weighted_obj, event); this module reconstructs per-channel arrays and
// keeps a bounded, step-ordered history for the charts.

export interface Frame {
    step: number;
    lambda: number[];
    P: number[];
    mi: number[];
    w: number[];
    p_total: number;
    sum_mi: number;
    weighted_obj: number;
    event: string;
}

const VECTOR_PREFIXES = ["lambda", "P", "mi", "w"] as const;

export function parseFrame(raw: Record<string, unknown>): Frame {
    const vectors: Record<string, number[]> = { lambda: [], P: [], mi: [], w: [] };
    for (const prefix of VECTOR_PREFIXES) {
        for (let i = 1; ; i++) {
            const key = `${prefix}_${i}`;
            if (!(key in raw)) break;
            vectors[prefix].push(Number(raw[key]));
        }
    }
    const n = vectors.lambda.length;
    if (n === 0) throw new Error("frame carries no channel columns");
    for (const prefix of VECTOR_PREFIXES) {
        if (vectors[prefix].length !== n) {
            throw new Error(`frame vector ${prefix} has ${vectors[prefix].length} entries, expected ${n}`);
        }
    }
    return {
        step: Number(raw.step),
        lambda: vectors.lambda,
        P: vectors.P,
        mi: vectors.mi,
        w: vectors.w,
        p_total: Number(raw.p_total),
        sum_mi: Number(raw.sum_mi),
        weighted_obj: Number(raw.weighted_obj),
        event: String(raw.event ?? ""),
    };
}

export function parseJsonlLine(line: string): Frame {
    return parseFrame(JSON.parse(line));
}

/** Bounded frame history, ordered by step, with continuity gaps recorded. */
export class FrameBuffer {
    private buf: Frame[] = [];
    private gapSteps: number[] = [];

    constructor(readonly capacity: number = 2000) {
        if (capacity < 1) throw new Error("capacity must be >= 1");
    }

    /** Expected spacing between consecutive frames (server decimation). */
    private spacing(): number | null {
        if (this.buf.length < 2) return null;
        const a = this.buf[this.buf.length - 2].step;
        const b = this.buf[this.buf.length - 1].step;
        return b - a;
    }

    push(frame: Frame): void {
        const last = this.buf[this.buf.length - 1];
        if (last !== undefined && frame.step <= last.step) {
            return; // stale or duplicate delivery: ordering wins
        }
        const spacing = this.spacing();
        if (last !== undefined && spacing !== null && frame.step - last.step > spacing) {
            this.gapSteps.push(frame.step);
        }
        this.buf.push(frame);
        if (this.buf.length > this.capacity) {
            this.buf.splice(0, this.buf.length - this.capacity);
            this.gapSteps = this.gapSteps.filter((s) => s >= this.buf[0].step);
        }
    }

    frames(): readonly Frame[] {
        return this.buf;
    }

    gaps(): readonly number[] {
        return this.gapSteps;
    }

    get size(): number {
        return this.buf.length;
    }

    last(): Frame | undefined {
        return this.buf[this.buf.length - 1];
    }

    clear(): void {
        this.buf = [];
        this.gapSteps = [];
    }

    /** Column view for charting: steps plus one series per channel. */
    series(field: "lambda" | "P" | "mi" | "w"): { steps: number[]; channels: number[][] } {
        const steps = this.buf.map((f) => f.step);
        if (this.buf.length === 0) return { steps, channels: [] };
        const n = this.buf[0][field].length;
        const channels: number[][] = [];
        for (let i = 0; i < n; i++) {
            channels.push(this.buf.map((f) => f[field][i]));
        }
        return { steps, channels };
    }

    scalars(field: "sum_mi" | "p_total" | "weighted_obj"): number[] {
        return this.buf.map((f) => f[field]);
    }
}
