import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, BusyError, NetworkError } from "../src/api.js";
import { WIRE_VERSION } from "../src/wire.js";
import { ScriptedService, scriptedFetch } from "./scripted.js";

describe("client protocol", () => {
  it("stamps the wire version on every write", async () => {
    const bodies: unknown[] = [];
    const api = new ApiClient("http://svc", async (_url, init) => {
      bodies.push(JSON.parse(String(init?.body)));
      return {
        status: 200,
        json: async () => ({ v: WIRE_VERSION, session_id: "s0001", state: { kind: "starting" } }),
      };
    });
    await api.startSession({ direction: "tail", entity: "a", relation: "b" });
    await api.postFacts("s0001", [{ head: "x", relation: "r", tail: "y" }]);
    expect(bodies).toEqual([
      { v: WIRE_VERSION, query: { direction: "tail", entity: "a", relation: "b" } },
      { v: WIRE_VERSION, triples: [{ head: "x", relation: "r", tail: "y" }] },
    ]);
  });

  it("wraps connection failures as retryable network errors", async () => {
    const service = new ScriptedService();
    service.networkDown = true;
    const api = new ApiClient("http://svc", scriptedFetch(service));
    const failure = api.kbStats();
    await expect(failure).rejects.toBeInstanceOf(NetworkError);
    await expect(failure).rejects.toHaveProperty("retryable", true);
  });

  it("maps 409 to a retryable busy error with the service's words", async () => {
    const service = new ScriptedService();
    service.busy = true;
    const api = new ApiClient("http://svc", scriptedFetch(service));
    const failure = api.startSession({ direction: "tail", entity: "a", relation: "b" });
    await expect(failure).rejects.toBeInstanceOf(BusyError);
    await expect(failure).rejects.toThrow("engine busy with another session");
  });

  it("surfaces 4xx details as non-retryable api errors", async () => {
    const service = new ScriptedService();
    const api = new ApiClient("http://svc", scriptedFetch(service));
    const failure = api.getSession("s9999");
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await expect(failure).rejects.toThrow("no session s9999");
    await expect(failure).rejects.toHaveProperty("status", 404);
    await expect(failure).rejects.toHaveProperty("retryable", false);
  });
});
