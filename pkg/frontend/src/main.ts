// Operator console wiring: live charts from the SSE stream, command panels
// that POST to the runtime API, and the navigator reasoning audit feed.

import { ApiClient, POLICY_PRESETS } from "./api.js";
import { CHANNEL_COLORS, LinePanel } from "./charts.js";
import { renderEntry } from "./feed.js";
import { FrameBuffer, parseFrame } from "./frames.js";
import { StreamClient, StreamStatus } from "./stream.js";

const api = new ApiClient();
const buffer = new FrameBuffer(2000);

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (node === null) throw new Error(`missing element #${id}`);
    return node as T;
}

const statusBadge = el<HTMLSpanElement>("stream-status");
const statsLine = el<HTMLSpanElement>("stats-line");
const policyInput = el<HTMLTextAreaElement>("policy-input");
const policyCurrent = el<HTMLSpanElement>("policy-current");
const feed = el<HTMLDivElement>("reasoning-feed");
const budgetInput = el<HTMLInputElement>("budget-input");
const navToggle = el<HTMLButtonElement>("nav-toggle");
const flash = el<HTMLSpanElement>("action-flash");

const weightsPanel = new LinePanel(el<HTMLCanvasElement>("chart-weights"), {
    title: "weights w_i", yMin: 0,
});
const miPanel = new LinePanel(el<HTMLCanvasElement>("chart-mi"), {
    title: "per-channel MI (bits)", yMin: 0, yMax: 2.15,
    guides: [{ y: 2.0, color: "#59a14f", label: "2-bit saturation" }],
});
const ratePanel = new LinePanel(el<HTMLCanvasElement>("chart-rate"), {
    title: "sum rate (bits) / power cap", rightLabel: "P_total",
});

let dirty = false;

function redraw(): void {
    dirty = false;
    const w = buffer.series("w");
    const mi = buffer.series("mi");
    const labels = w.channels.map((_, i) => `ch${i + 1}`);
    weightsPanel.render([
        { x: w.steps, ys: w.channels, colors: CHANNEL_COLORS, labels },
    ], buffer.gaps());
    miPanel.render([
        { x: mi.steps, ys: mi.channels, colors: CHANNEL_COLORS, labels },
    ], buffer.gaps());
    ratePanel.render([
        { x: w.steps, ys: [buffer.scalars("sum_mi")], colors: ["#4e79a7"], labels: ["sum MI"] },
        { x: w.steps, ys: [buffer.scalars("p_total")], colors: ["#e15759"], labels: ["P_total"], axis: "right" },
    ], buffer.gaps());
}

function scheduleRedraw(): void {
    if (dirty) return;
    dirty = true;
    requestAnimationFrame(redraw);
}

const stream = new StreamClient(
    "/api/stream",
    (payload) => {
        try {
            buffer.push(parseFrame(payload));
        } catch {
            return;
        }
        scheduleRedraw();
    },
    (status: StreamStatus) => {
        statusBadge.textContent = status;
        statusBadge.className = `badge status-${status}`;
    },
);
stream.connect();

function flashMessage(text: string, isError = false): void {
    flash.textContent = text;
    flash.className = isError ? "flash error" : "flash ok";
    setTimeout(() => { flash.textContent = ""; }, 4000);
}

async function guard(action: () => Promise<void>, okText: string): Promise<void> {
    try {
        await action();
        flashMessage(okText);
    } catch (err) {
        flashMessage(String(err), true);
    }
}

// policy panel ------------------------------------------------------------
const presetBar = el<HTMLDivElement>("policy-presets");
for (const preset of POLICY_PRESETS) {
    const btn = document.createElement("button");
    btn.textContent = preset.id;
    btn.title = preset.text;
    btn.onclick = () => { policyInput.value = preset.text; };
    presetBar.appendChild(btn);
}
el<HTMLButtonElement>("policy-submit").onclick = () =>
    guard(() => api.setPolicy(policyInput.value.trim()), "policy submitted");

// disturbance panel -------------------------------------------------------
el<HTMLButtonElement>("reverse-gains").onclick = () =>
    guard(async () => { await api.reverseGains(); }, "gains reversed");
el<HTMLButtonElement>("budget-apply").onclick = () =>
    guard(() => api.setBudget(Number(budgetInput.value)), "budget submitted");
navToggle.onclick = () =>
    guard(async () => {
        const enabled = navToggle.dataset.enabled === "true";
        await api.setNavigatorEnabled(!enabled);
    }, "navigator toggled");

// reasoning feed ----------------------------------------------------------
async function refreshFeed(): Promise<void> {
    try {
        const entries = await api.llmLog(25);
        feed.replaceChildren(
            ...entries.slice().reverse().map((e) => renderEntry(e, document)));
    } catch {
        // feed refresh failures are cosmetic; the next poll retries
    }
}

async function refreshState(): Promise<void> {
    try {
        const state = await api.state();
        policyCurrent.textContent = state.policy;
        budgetInput.placeholder = String(state.params.p_total);
        navToggle.dataset.enabled = String(state.navigator.enabled);
        navToggle.textContent = state.navigator.enabled ? "pause navigator" : "resume navigator";
        statsLine.textContent =
            `steps ${state.counters.steps} | navigator ${state.navigator.status} ` +
            `(applied ${state.navigator.applied}, skipped ${state.navigator.skipped}, ` +
            `failed ${state.navigator.failed}) | violations ${state.counters.violations} ` +
            `| gains [${state.gains.join(", ")}]`;
    } catch {
        statsLine.textContent = "runtime unreachable";
    }
}

setInterval(refreshFeed, 2000);
setInterval(refreshState, 2000);
void refreshFeed();
void refreshState();
