// Session state machine. Framework-free so the protocol logic is testable
// without a DOM: one chain pair on screen at a time, both chains fully
// judged before advancing, survey gated behind the final item, and failed
// submissions retryable without losing entered judgments (the service
// accepts idempotent resubmissions).

import { ApiError, type AnnotationClient } from "./api.js";
import type { Instructions, Progress, SessionItem } from "./types.js";

export type Phase = "loading" | "judging" | "survey" | "done" | "failed";

export type ChainLabel = "a" | "b";
export type Dimension = "integrity" | "coherence";

export interface ChainJudgment {
    integrity: boolean | null;
    coherence: boolean | null;
}

export interface SurveyInput {
    difficulty: number;
    canConstructChain: boolean;
    comparisonNote: string;
}

function emptyJudgments(): Record<ChainLabel, ChainJudgment> {
    return {
        a: { integrity: null, coherence: null },
        b: { integrity: null, coherence: null },
    };
}

export class SessionController {
    phase: Phase = "loading";
    instructions: Instructions | null = null;
    progress: Progress = { completed: 0, total: 0 };
    item: SessionItem | null = null;
    judgments: Record<ChainLabel, ChainJudgment> = emptyJudgments();

    /** Transport or service failure of the last action; retryable. */
    error: string | null = null;
    /** Inline validation message; cleared on input. */
    validationError: string | null = null;
    surveyComplete = false;

    private onChange: () => void;

    constructor(
        private readonly api: AnnotationClient,
        readonly sessionId: string,
        readonly annotatorId: string,
        onChange?: () => void,
    ) {
        this.onChange = onChange ?? (() => {});
    }

    private notify(): void {
        this.onChange();
    }

    /** Load or reload the annotator's next unjudged item from the service. */
    async start(): Promise<void> {
        this.phase = "loading";
        this.error = null;
        this.notify();
        try {
            const body = await this.api.nextItem(this.sessionId, this.annotatorId);
            this.instructions = body.instructions;
            this.progress = body.progress;
            this.surveyComplete = body.survey_submitted;
            if (!body.done && body.item) {
                this.item = body.item;
                this.judgments = emptyJudgments();
                this.phase = "judging";
            } else {
                this.item = null;
                this.phase = body.survey_submitted ? "done" : "survey";
            }
        } catch (error) {
            this.error = describeError(error);
            this.phase = "failed";
        }
        this.notify();
    }

    setJudgment(label: ChainLabel, dimension: Dimension, value: boolean): void {
        this.judgments[label][dimension] = value;
        this.validationError = null;
        this.notify();
    }

    get missingJudgments(): string[] {
        const missing: string[] = [];
        for (const label of ["a", "b"] as const) {
            for (const dimension of ["integrity", "coherence"] as const) {
                if (this.judgments[label][dimension] === null) {
                    missing.push(`chain ${label.toUpperCase()}: ${dimension}`);
                }
            }
        }
        return missing;
    }

    get canSubmitItem(): boolean {
        return this.phase === "judging" && this.missingJudgments.length === 0;
    }

    /**
     * Post one judgment record per chain and advance. Validation failures
     * block locally; transport failures keep entered judgments for retry.
     */
    async submitItem(): Promise<void> {
        if (this.phase !== "judging" || !this.item) {
            return;
        }
        const missing = this.missingJudgments;
        if (missing.length > 0) {
            this.validationError = `Judge both chains on both questions before continuing (missing: ${missing.join(", ")})`;
            this.notify();
            return;
        }
        this.error = null;
        this.notify();
        const chains: [ChainLabel, string][] = [
            ["a", this.item.chain_a.chain_id],
            ["b", this.item.chain_b.chain_id],
        ];
        try {
            for (const [label, chainId] of chains) {
                const judgment = this.judgments[label];
                await this.api.submitJudgment(this.sessionId, {
                    annotator_id: this.annotatorId,
                    chain_id: chainId,
                    integrity_judgment: judgment.integrity as boolean,
                    coherence_judgment: judgment.coherence as boolean,
                });
            }
        } catch (error) {
            // Keep judgments untouched; the retry resubmits both chains and
            // the service acknowledges the already-stored one as duplicate.
            this.error = describeError(error);
            this.notify();
            return;
        }
        await this.start();
    }

    validateSurvey(input: SurveyInput): string | null {
        if (!Number.isInteger(input.difficulty) || input.difficulty < 1 || input.difficulty > 5) {
            return "Difficulty must be a whole number between 1 and 5";
        }
        return null;
    }

    async submitSurvey(input: SurveyInput): Promise<void> {
        if (this.phase !== "survey") {
            this.validationError = "The survey opens after all assigned items are judged";
            this.notify();
            return;
        }
        const problem = this.validateSurvey(input);
        if (problem) {
            this.validationError = problem;
            this.notify();
            return;
        }
        this.error = null;
        this.validationError = null;
        try {
            await this.api.submitSurvey(this.sessionId, {
                annotator_id: this.annotatorId,
                difficulty: input.difficulty,
                can_construct_chain: input.canConstructChain,
                comparison_note: input.comparisonNote,
            });
        } catch (error) {
            this.error = describeError(error);
            this.notify();
            return;
        }
        this.surveyComplete = true;
        this.phase = "done";
        this.notify();
    }

    /** Retry the failed network action without losing local state. */
    async retry(): Promise<void> {
        if (this.phase === "failed") {
            await this.start();
        } else if (this.phase === "judging" && this.error) {
            await this.submitItem();
        }
    }
}

export function describeError(error: unknown): string {
    if (error instanceof ApiError) {
        return `${error.errorName}: ${error.message}`;
    }
    if (error instanceof Error) {
        return `NetworkError: ${error.message}`;
    }
    return String(error);
}
