// Server-sent-events client with exponential-backoff reconnect and a
// staleness watchdog. EventSource's built-in retry is disabled in favor of
// explicit control so the UI can show connecting/live/stale/reconnecting.

export type StreamStatus = "connecting" | "live" | "stale" | "reconnecting";

export interface EventSourceLike {
    onopen: ((ev: unknown) => void) | null;
    onmessage: ((ev: { data: string }) => void) | null;
    onerror: ((ev: unknown) => void) | null;
    close(): void;
}

export interface StreamOptions {
    staleAfterMs?: number;
    backoffMinMs?: number;
    backoffMaxMs?: number;
    backoffFactor?: number;
    makeEventSource?: (url: string) => EventSourceLike;
    setTimer?: (fn: () => void, ms: number) => unknown;
    clearTimer?: (handle: unknown) => void;
}

export class StreamClient {
    private es: EventSourceLike | null = null;
    private backoffMs: number;
    private staleHandle: unknown = null;
    private reconnectHandle: unknown = null;
    private closed = false;

    private readonly staleAfterMs: number;
    private readonly backoffMinMs: number;
    private readonly backoffMaxMs: number;
    private readonly backoffFactor: number;
    private readonly makeEs: (url: string) => EventSourceLike;
    private readonly setTimer: (fn: () => void, ms: number) => unknown;
    private readonly clearTimer: (handle: unknown) => void;

    constructor(
        private readonly url: string,
        private readonly onData: (payload: Record<string, unknown>) => void,
        private readonly onStatus: (status: StreamStatus) => void,
        opts: StreamOptions = {},
    ) {
        this.staleAfterMs = opts.staleAfterMs ?? 5000;
        this.backoffMinMs = opts.backoffMinMs ?? 250;
        this.backoffMaxMs = opts.backoffMaxMs ?? 5000;
        this.backoffFactor = opts.backoffFactor ?? 2;
        this.backoffMs = this.backoffMinMs;
        this.makeEs = opts.makeEventSource
            ?? ((u: string) => new EventSource(u) as unknown as EventSourceLike);
        this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
        this.clearTimer = opts.clearTimer ?? ((h) => clearTimeout(h as number));
    }

    connect(): void {
        if (this.closed) return;
        this.onStatus("connecting");
        const es = this.makeEs(this.url);
        this.es = es;
        es.onopen = () => {
            this.backoffMs = this.backoffMinMs;
            this.onStatus("live");
            this.armStaleWatchdog();
        };
        es.onmessage = (ev) => {
            this.armStaleWatchdog();
            let payload: Record<string, unknown>;
            try {
                payload = JSON.parse(ev.data);
            } catch {
                return; // keepalives / malformed lines are not frames
            }
            this.onStatus("live");
            this.onData(payload);
        };
        es.onerror = () => {
            this.scheduleReconnect();
        };
    }

    private armStaleWatchdog(): void {
        if (this.staleHandle !== null) this.clearTimer(this.staleHandle);
        this.staleHandle = this.setTimer(() => {
            this.onStatus("stale");
        }, this.staleAfterMs);
    }

    private scheduleReconnect(): void {
        if (this.closed) return;
        this.teardown();
        this.onStatus("reconnecting");
        const delay = this.backoffMs;
        this.backoffMs = Math.min(this.backoffMs * this.backoffFactor, this.backoffMaxMs);
        this.reconnectHandle = this.setTimer(() => this.connect(), delay);
    }

    private teardown(): void {
        if (this.es !== null) {
            this.es.onopen = this.es.onmessage = this.es.onerror = null;
            this.es.close();
            this.es = null;
        }
        if (this.staleHandle !== null) {
            this.clearTimer(this.staleHandle);
            this.staleHandle = null;
        }
    }

    close(): void {
        this.closed = true;
        this.teardown();
        if (this.reconnectHandle !== null) this.clearTimer(this.reconnectHandle);
    }
}
