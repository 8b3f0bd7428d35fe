// Command/read client for the runtime API. The dashboard never computes
// control values itself: every displayed number is server state, and every
// action is a POST the server validates.

export interface RuntimeState {
    step: number;
    frame: Record<string, unknown>;
    gains: number[];
    params: { w: number[]; p_total: number };
    policy: string;
    navigator: {
        status: string;
        last_error: string | null;
        enabled: boolean;
        applied: number;
        skipped: number;
        failed: number;
    };
    counters: { steps: number; telemetry_dropped: number; violations: number };
}

export interface LogEntry {
    timestamp: number;
    status: string; // applied | fallback | skipped
    summary: string | null;
    raw_response: string | null;
    action: Record<string, unknown> | null;
    error: string | null;
    flags: string[];
    applied: { w: number[]; p_total: number } | null;
    reasoning: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    constructor(
        private readonly base: string = "",
        private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
    ) {}

    private async post(path: string, body: unknown): Promise<Response> {
        const resp = await this.fetchFn(this.base + path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!resp.ok) {
            const detail = await resp.text();
            throw new Error(`POST ${path} -> ${resp.status}: ${detail}`);
        }
        return resp;
    }

    async state(): Promise<RuntimeState> {
        const resp = await this.fetchFn(this.base + "/api/state");
        if (!resp.ok) throw new Error(`GET /api/state -> ${resp.status}`);
        return (await resp.json()) as RuntimeState;
    }

    async llmLog(limit = 30): Promise<LogEntry[]> {
        const resp = await this.fetchFn(`${this.base}/api/llm-log?limit=${limit}`);
        if (!resp.ok) throw new Error(`GET /api/llm-log -> ${resp.status}`);
        const data = (await resp.json()) as { entries: LogEntry[] };
        return data.entries;
    }

    async setPolicy(text: string): Promise<void> {
        await this.post("/api/policy", { text });
    }

    async setGains(gains: number[]): Promise<void> {
        await this.post("/api/gains", { gains });
    }

    /** The one-click disturbance: flip the gain vector end-to-end. */
    async reverseGains(): Promise<number[]> {
        const current = (await this.state()).gains;
        const flipped = [...current].reverse();
        await this.setGains(flipped);
        return flipped;
    }

    async setBudget(pTotal: number): Promise<void> {
        await this.post("/api/budget", { p_total: pTotal });
    }

    async setNavigatorEnabled(enabled: boolean): Promise<void> {
        await this.post("/api/navigator", { enabled });
    }
}

/** Guardrail badges to show next to a reasoning-feed entry. */
export function entryBadges(entry: Pick<LogEntry, "status" | "flags">): string[] {
    const badges: string[] = [];
    if (entry.status === "fallback") badges.push("fallback");
    if (entry.status === "skipped") badges.push("skipped");
    for (const flag of entry.flags) {
        if (flag !== "fallback" && !badges.includes(flag)) badges.push(flag);
    }
    return badges;
}

export const POLICY_PRESETS: ReadonlyArray<{ id: string; text: string }> = [
    { id: "P1", text: "Maximize total throughput" },
    { id: "P2", text: "Prioritize channels 7 and 8" },
    { id: "P3", text: "Minimize total power while keeping sum rate above 10 bits" },
    { id: "P4", text: "Shut down the 3 weakest channels and focus power on the rest" },
    { id: "EQ", text: "Equalize MI across all channels" },
];
