// Reasoning-feed rendering: verbatim navigator rationale plus the
// sanitized action actually applied, with guardrail badges so operator
// interventions are visible at a glance.

import { entryBadges, LogEntry } from "./api.js";

export function renderEntry(entry: LogEntry, doc: Document): HTMLElement {
    const card = doc.createElement("div");
    card.className = `entry entry-${entry.status}`;
    const head = doc.createElement("div");
    head.className = "entry-head";
    const when = new Date(entry.timestamp * 1000).toLocaleTimeString();
    const label = doc.createElement("span");
    label.textContent = `${when}  ${entry.status}`;
    head.appendChild(label);
    for (const badge of entryBadges(entry)) {
        const b = doc.createElement("span");
        b.className = `badge badge-${badge}`;
        b.textContent = badge;
        head.appendChild(b);
    }
    card.appendChild(head);
    const body = doc.createElement("div");
    body.className = "entry-body";
    if (entry.reasoning) {
        body.textContent = entry.reasoning;
    } else if (entry.error) {
        body.textContent = entry.error;
    } else {
        body.textContent = "(no reasoning provided)";
    }
    card.appendChild(body);
    if (entry.applied !== null) {
        const applied = doc.createElement("div");
        applied.className = "entry-applied";
        const ws = entry.applied.w.map((x) => x.toFixed(3)).join(", ");
        applied.textContent =
            `applied w = [${ws}], P_total = ${entry.applied.p_total.toFixed(1)}`;
        card.appendChild(applied);
    }
    return card;
}
