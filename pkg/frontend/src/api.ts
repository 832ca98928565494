// Thin typed client for the annotation service. Service errors carry a
// name in the response detail ({error, message}); the UI surfaces those
// names verbatim (NotAssigned, SessionClosed, DuplicateSubmission, ...).

import type {
    JudgmentPayload,
    JudgmentResponse,
    NextItemResponse,
    SurveyPayload,
    SurveyResponse,
} from "./types.js";

export class ApiError extends Error {
    constructor(
        readonly errorName: string,
        message: string,
        readonly status: number,
    ) {
        super(message);
    }
}

export interface AnnotationClient {
    nextItem(sessionId: string, annotatorId: string): Promise<NextItemResponse>;
    submitJudgment(sessionId: string, payload: JudgmentPayload): Promise<JudgmentResponse>;
    submitSurvey(sessionId: string, payload: SurveyPayload): Promise<SurveyResponse>;
}

function errorFromBody(status: number, body: unknown): ApiError {
    if (body && typeof body === "object" && "detail" in body) {
        const detail = (body as { detail: unknown }).detail;
        if (detail && typeof detail === "object" && "error" in detail) {
            const named = detail as { error: string; message?: string };
            return new ApiError(named.error, named.message ?? named.error, status);
        }
        return new ApiError("ValidationError", JSON.stringify(detail), status);
    }
    return new ApiError("HttpError", `service returned status ${status}`, status);
}

export class HttpAnnotationClient implements AnnotationClient {
    constructor(
        private readonly baseUrl: string,
        private readonly fetchImpl: typeof fetch = fetch,
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
        let body: unknown = null;
        try {
            body = await response.json();
        } catch {
            body = null;
        }
        if (!response.ok) {
            throw errorFromBody(response.status, body);
        }
        return body as T;
    }

    nextItem(sessionId: string, annotatorId: string): Promise<NextItemResponse> {
        const annotator = encodeURIComponent(annotatorId);
        return this.request(`/sessions/${sessionId}/next-item?annotator=${annotator}`);
    }

    submitJudgment(sessionId: string, payload: JudgmentPayload): Promise<JudgmentResponse> {
        return this.request(`/sessions/${sessionId}/judgments`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
    }

    submitSurvey(sessionId: string, payload: SurveyPayload): Promise<SurveyResponse> {
        return this.request(`/sessions/${sessionId}/survey`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
    }
}
