// @vitest-environment happy-dom

import { describe, expect, it } from "vitest";

import { render } from "../src/app.js";
import { SessionController } from "../src/session.js";
import type { AnnotationClient } from "../src/api.js";
import type { Instructions, SessionItem } from "../src/types.js";

const INSTRUCTIONS: Instructions = {
    text: "Judge each chain.",
    examples: [
        ["Excess of CO2", "Global warming", "Flooding"],
        ["Climate change", "Excessive rainfall", "Flooding"],
    ],
};

const ITEM: SessionItem = {
    item_id: "item-0",
    chain_a: { chain_id: "c-m", events: ["start", "middle", "end"] },
    chain_b: { chain_id: "c-v", events: ["start", "detour", "end"] },
};

function controllerInPhase(phase: "judging" | "survey" | "done" | "failed"): SessionController {
    const controller = new SessionController({} as AnnotationClient, "s", "anno");
    controller.phase = phase;
    controller.instructions = INSTRUCTIONS;
    controller.progress = { completed: 2, total: 6 };
    if (phase === "judging") {
        controller.item = ITEM;
    }
    if (phase === "failed") {
        controller.error = "NetworkError: fetch failed";
    }
    return controller;
}

function mount(): HTMLElement {
    const root = document.createElement("div");
    document.body.appendChild(root);
    return root;
}

describe("render", () => {
    it("shows both chains as vertical event lists with judgment controls", () => {
        const root = mount();
        const controller = controllerInPhase("judging");
        render(root, controller);
        expect(root.querySelectorAll(".chain-card").length).toBe(2);
        expect(root.querySelectorAll(".chain-event").length).toBe(6);
        expect(root.querySelectorAll(".chain-arrow").length).toBe(4);
        expect(root.textContent).toContain("Item 3 of 6");
        expect(root.textContent).toContain("Chain A");
        expect(root.textContent).toContain("Chain B");
        // 2 chains x 2 dimensions x yes/no radios.
        expect(root.querySelectorAll("input[type=radio]").length).toBe(8);
        expect(root.textContent).not.toMatch(/model/i);
    });

    it("radio clicks feed the controller and enable submission", () => {
        const root = mount();
        const controller = controllerInPhase("judging");
        render(root, controller);
        const radios = root.querySelectorAll<HTMLInputElement>("input[type=radio]");
        // Order: a-integrity yes/no, a-coherence yes/no, b-integrity ..., b-coherence ...
        [0, 2, 4, 6].forEach((index) => radios[index]!.dispatchEvent(new Event("change")));
        expect(controller.judgments.a.integrity).toBe(true);
        expect(controller.judgments.b.coherence).toBe(true);
        expect(controller.canSubmitItem).toBe(true);
    });

    it("shows inline validation and retry affordances", () => {
        const root = mount();
        const controller = controllerInPhase("judging");
        controller.validationError = "Judge both chains";
        controller.error = "NetworkError: boom";
        render(root, controller);
        expect(root.querySelector(".validation-error")?.textContent).toContain("Judge both chains");
        expect(root.querySelector("button.retry")).not.toBeNull();
    });

    it("renders the survey with a 1-5 difficulty scale", () => {
        const root = mount();
        render(root, controllerInPhase("survey"));
        expect(root.querySelectorAll("input[name=difficulty]").length).toBe(5);
        expect(root.querySelectorAll("input[name=can-construct]").length).toBe(2);
        expect(root.querySelector("textarea")).not.toBeNull();
    });

    it("renders completion and failure screens", () => {
        const done = mount();
        render(done, controllerInPhase("done"));
        expect(done.textContent).toContain("Session complete");

        const failed = mount();
        render(failed, controllerInPhase("failed"));
        expect(failed.textContent).toContain("NetworkError");
        expect(failed.querySelector("button.retry")).not.toBeNull();
    });
});
