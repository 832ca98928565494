import { describe, expect, it } from "vitest";

import { ApiError, HttpAnnotationClient } from "../src/api.js";

function fakeFetch(status: number, body: unknown): typeof fetch {
    return async () =>
        new Response(JSON.stringify(body), {
            status,
            headers: { "Content-Type": "application/json" },
        });
}

describe("HttpAnnotationClient", () => {
    it("returns parsed payloads on success", async () => {
        const client = new HttpAnnotationClient(
            "http://svc",
            fakeFetch(200, { done: true, progress: { completed: 6, total: 6 } }),
        );
        const body = await client.nextItem("s", "anno");
        expect(body.done).toBe(true);
        expect(body.progress.total).toBe(6);
    });

    it("lifts named service errors into ApiError verbatim", async () => {
        const client = new HttpAnnotationClient(
            "http://svc",
            fakeFetch(409, { detail: { error: "SessionClosed", message: "already completed" } }),
        );
        const failure = await client
            .submitJudgment("s", {
                annotator_id: "anno",
                chain_id: "c",
                integrity_judgment: true,
                coherence_judgment: true,
            })
            .catch((e: unknown) => e);
        expect(failure).toBeInstanceOf(ApiError);
        expect((failure as ApiError).errorName).toBe("SessionClosed");
        expect((failure as ApiError).status).toBe(409);
        expect((failure as ApiError).message).toBe("already completed");
    });

    it("wraps schema validation errors without a named detail", async () => {
        const client = new HttpAnnotationClient(
            "http://svc",
            fakeFetch(422, { detail: [{ loc: ["body", "difficulty"], msg: "too large" }] }),
        );
        const failure = await client
            .submitSurvey("s", {
                annotator_id: "anno",
                difficulty: 9,
                can_construct_chain: true,
                comparison_note: "",
            })
            .catch((e: unknown) => e);
        expect((failure as ApiError).errorName).toBe("ValidationError");
        expect((failure as ApiError).message).toContain("difficulty");
    });

    it("encodes annotator tokens in the query string", async () => {
        let requested = "";
        const client = new HttpAnnotationClient("http://svc", (async (url: RequestInfo | URL) => {
            requested = String(url);
            return new Response(JSON.stringify({ done: true }), { status: 200 });
        }) as typeof fetch);
        await client.nextItem("s", "anno with space");
        expect(requested).toBe("http://svc/sessions/s/next-item?annotator=anno%20with%20space");
    });
});
