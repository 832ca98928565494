// DOM wiring: renders the controller state into #app and forwards events.
// Connection parameters come from the query string:
//   ?api=http://127.0.0.1:8400&session=<id>&annotator=<token>

import { HttpAnnotationClient } from "./api.js";
import {
    SessionController,
    type ChainLabel,
    type Dimension,
} from "./session.js";
import type { ChainView } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

function chainCard(
    label: ChainLabel,
    chain: ChainView,
    controller: SessionController,
): HTMLElement {
    const card = el("section", "chain-card");
    card.appendChild(el("h3", "chain-title", `Chain ${label.toUpperCase()}`));

    const list = el("ol", "chain-events");
    chain.events.forEach((event, index) => {
        if (index > 0) list.appendChild(el("li", "chain-arrow", "↓"));
        list.appendChild(el("li", "chain-event", event));
    });
    card.appendChild(list);

    for (const dimension of ["integrity", "coherence"] as const) {
        card.appendChild(judgmentRow(label, dimension, controller));
    }
    return card;
}

const QUESTIONS: Record<Dimension, string> = {
    integrity: "Does every step directly cause the next (chain integrity)?",
    coherence: "Is the chain logically coherent as a whole?",
};

function judgmentRow(
    label: ChainLabel,
    dimension: Dimension,
    controller: SessionController,
): HTMLElement {
    const row = el("div", "judgment-row");
    row.appendChild(el("span", "judgment-question", QUESTIONS[dimension]));
    const group = el("span", "judgment-options");
    for (const value of [true, false]) {
        const wrapper = el("label", "judgment-option");
        const input = el("input") as HTMLInputElement;
        input.type = "radio";
        input.name = `${label}-${dimension}`;
        input.checked = controller.judgments[label][dimension] === value;
        input.addEventListener("change", () => controller.setJudgment(label, dimension, value));
        wrapper.appendChild(input);
        wrapper.appendChild(document.createTextNode(value ? "yes" : "no"));
        group.appendChild(wrapper);
    }
    row.appendChild(group);
    return row;
}

function instructionsPanel(controller: SessionController): HTMLElement {
    const panel = el("aside", "instructions");
    panel.appendChild(el("h2", undefined, "Instructions"));
    panel.appendChild(el("p", undefined, controller.instructions?.text ?? ""));
    for (const example of controller.instructions?.examples ?? []) {
        panel.appendChild(el("p", "example-chain", example.join(" → ")));
    }
    return panel;
}

function judgingScreen(root: HTMLElement, controller: SessionController): void {
    const item = controller.item;
    if (!item) return;
    root.appendChild(instructionsPanel(controller));

    const main = el("main", "judging");
    main.appendChild(
        el(
            "p",
            "progress",
            `Item ${controller.progress.completed + 1} of ${controller.progress.total}`,
        ),
    );
    main.appendChild(chainCard("a", item.chain_a, controller));
    main.appendChild(chainCard("b", item.chain_b, controller));

    if (controller.validationError) {
        main.appendChild(el("p", "validation-error", controller.validationError));
    }
    if (controller.error) {
        main.appendChild(el("p", "submit-error", controller.error));
        const retry = el("button", "retry", "Retry submission");
        retry.addEventListener("click", () => void controller.retry());
        main.appendChild(retry);
    }

    const submit = el("button", "submit-item", "Submit judgments");
    submit.addEventListener("click", () => void controller.submitItem());
    main.appendChild(submit);
    root.appendChild(main);
}

function surveyScreen(root: HTMLElement, controller: SessionController): void {
    const main = el("main", "survey");
    main.appendChild(el("h2", undefined, "Exit survey"));
    main.appendChild(el("p", undefined, "All items are judged. One last step:"));

    const difficultyRow = el("div", "survey-row");
    difficultyRow.appendChild(
        el("span", undefined, "How difficult was the annotation task? (1 = very easy, 5 = very hard)"),
    );
    let difficulty = 0;
    for (let value = 1; value <= 5; value += 1) {
        const wrapper = el("label", "judgment-option");
        const input = el("input") as HTMLInputElement;
        input.type = "radio";
        input.name = "difficulty";
        input.addEventListener("change", () => {
            difficulty = value;
        });
        wrapper.appendChild(input);
        wrapper.appendChild(document.createTextNode(String(value)));
        difficultyRow.appendChild(wrapper);
    }
    main.appendChild(difficultyRow);

    const constructRow = el("div", "survey-row");
    constructRow.appendChild(
        el("span", undefined, "Could you construct a valid, coherent causal chain on this topic yourself?"),
    );
    let canConstruct = false;
    for (const value of [true, false]) {
        const wrapper = el("label", "judgment-option");
        const input = el("input") as HTMLInputElement;
        input.type = "radio";
        input.name = "can-construct";
        input.addEventListener("change", () => {
            canConstruct = value;
        });
        wrapper.appendChild(input);
        wrapper.appendChild(document.createTextNode(value ? "yes" : "no"));
        constructRow.appendChild(wrapper);
    }
    main.appendChild(constructRow);

    const noteRow = el("div", "survey-row");
    noteRow.appendChild(
        el("span", undefined, "How would your own chain compare in length and detail?"),
    );
    const note = el("textarea") as HTMLTextAreaElement;
    note.rows = 3;
    noteRow.appendChild(note);
    main.appendChild(noteRow);

    if (controller.validationError) {
        main.appendChild(el("p", "validation-error", controller.validationError));
    }
    if (controller.error) {
        main.appendChild(el("p", "submit-error", controller.error));
    }

    const submit = el("button", "submit-survey", "Finish session");
    submit.addEventListener("click", () =>
        void controller.submitSurvey({
            difficulty,
            canConstructChain: canConstruct,
            comparisonNote: note.value,
        }),
    );
    main.appendChild(submit);
    root.appendChild(main);
}

export function render(root: HTMLElement, controller: SessionController): void {
    root.replaceChildren();
    switch (controller.phase) {
        case "loading":
            root.appendChild(el("p", "loading", "Loading your next item…"));
            break;
        case "failed": {
            root.appendChild(el("p", "submit-error", controller.error ?? "Connection failed"));
            const retry = el("button", "retry", "Retry");
            retry.addEventListener("click", () => void controller.retry());
            root.appendChild(retry);
            break;
        }
        case "judging":
            judgingScreen(root, controller);
            break;
        case "survey":
            surveyScreen(root, controller);
            break;
        case "done":
            root.appendChild(el("h2", undefined, "Session complete"));
            root.appendChild(
                el("p", undefined, "Every assigned chain pair is judged and the survey is saved. Thank you!"),
            );
            break;
    }
}

export function boot(): void {
    const params = new URLSearchParams(window.location.search);
    const api = params.get("api") ?? window.location.origin;
    const sessionId = params.get("session") ?? "";
    const annotatorId = params.get("annotator") ?? "";
    const root = document.getElementById("app");
    if (!root) throw new Error("missing #app mount point");
    if (!sessionId || !annotatorId) {
        root.replaceChildren(
            el(
                "p",
                "submit-error",
                "Open this page with ?session=<id>&annotator=<token> (and optionally &api=<service url>).",
            ),
        );
        return;
    }
    const client = new HttpAnnotationClient(api);
    const controller: SessionController = new SessionController(
        client,
        sessionId,
        annotatorId,
        () => render(root, controller),
    );
    void controller.start();
}

// Module scripts run after parsing, so the mount point exists on the real
// page; importing this module elsewhere (tests) must stay side-effect free.
if (typeof document !== "undefined" && document.getElementById("app")) {
    boot();
}
