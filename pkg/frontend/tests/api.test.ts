import { describe, expect, it } from "vitest";

import { AnnotationApi, ApiError, type FetchLike } from "../src/api.js";

function fakeFetch(
  handler: (input: string, init?: Parameters<FetchLike>[1]) => { status: number; body: unknown },
): FetchLike {
  return async (input, init) => {
    const { status, body } = handler(input, init);
    return { status, json: async () => body };
  };
}

describe("AnnotationApi", () => {
  it("fetches the next HIT for a worker", async () => {
    const calls: string[] = [];
    const api = new AnnotationApi(
      "http://svc",
      fakeFetch((input) => {
        calls.push(input);
        return { status: 200, body: { hit: null } };
      }),
    );
    const assignment = await api.nextHit("worker one");
    expect(assignment.hit).toBe(null);
    expect(calls).toEqual(["http://svc/v1/hits/next?worker=worker%20one"]);
  });

  it("posts submissions with worker, removals and elapsed time", async () => {
    let seen: { input: string; body: unknown } | null = null;
    const api = new AnnotationApi(
      "http://svc",
      fakeFetch((input, init) => {
        seen = { input, body: JSON.parse(init?.body ?? "null") };
        return { status: 200, body: { accepted: true } };
      }),
    );
    const outcome = await api.submit(
      "h#1",
      "w1",
      [{ turn: 0, position: 2, category: "Others" }],
      12.5,
    );
    expect(outcome.accepted).toBe(true);
    expect(seen).toEqual({
      input: "http://svc/v1/hits/h%231/submit",
      body: {
        worker_id: "w1",
        removals: [{ turn: 0, position: 2, category: "Others" }],
        elapsed_seconds: 12.5,
      },
    });
  });

  it("raises ApiError with the span diff on 422 rejections", async () => {
    const api = new AnnotationApi(
      "http://svc",
      fakeFetch(() => ({
        status: 422,
        body: { error: "SpanMismatch", detail: "labels outside the HIT span", diff: ["c:9:9"] },
      })),
    );
    const failure = await api.submit("h", "w", [], 0).catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(422);
    expect(failure.errorType).toBe("SpanMismatch");
    expect(failure.diff).toEqual(["c:9:9"]);
  });

  it("wraps transport failures as a status-0 ApiError", async () => {
    const api = new AnnotationApi("http://svc", async () => {
      throw new TypeError("connection refused");
    });
    const failure = await api.nextHit("w").catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(0);
    expect(failure.errorType).toBe("NetworkError");
  });
});
