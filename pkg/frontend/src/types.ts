// Payload shapes of the annotation service HTTP JSON API.

export interface ChainView {
    chain_id: string;
    events: string[];
}

export interface Instructions {
    text: string;
    examples: string[][];
}

export interface Progress {
    completed: number;
    total: number;
}

export interface SessionItem {
    item_id: string;
    chain_a: ChainView;
    chain_b: ChainView;
}

export interface NextItemResponse {
    done: boolean;
    progress: Progress;
    instructions: Instructions;
    survey_submitted: boolean;
    item: SessionItem | null;
}

export interface AnnotationRecordView {
    session_id: string;
    annotator_id: string;
    chain_id: string;
    integrity_judgment: boolean;
    coherence_judgment: boolean;
    submitted_at: string;
}

export interface JudgmentPayload {
    annotator_id: string;
    chain_id: string;
    integrity_judgment: boolean;
    coherence_judgment: boolean;
}

export interface JudgmentResponse {
    status: "stored" | "duplicate";
    record: AnnotationRecordView;
}

export interface SurveyPayload {
    annotator_id: string;
    difficulty: number;
    can_construct_chain: boolean;
    comparison_note: string;
}

export interface SurveyResponse {
    status: "stored";
    record: {
        annotator_id: string;
        difficulty: number;
        can_construct_chain: boolean;
        comparison_note: string;
    };
}
