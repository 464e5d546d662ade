import http from "node:http";
import { AddressInfo } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";

interface Seen {
  method: string;
  path: string;
  body: unknown;
}

// tiny scripted server: each test queues the reply it wants
let server: http.Server;
let base: string;
const seen: Seen[] = [];
let reply: { status: number; body: unknown } = { status: 200, body: {} };

beforeAll(async () => {
  server = http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => {
      const raw = Buffer.concat(chunks).toString();
      seen.push({
        method: req.method ?? "",
        path: req.url ?? "",
        body: raw ? JSON.parse(raw) : undefined,
      });
      res.writeHead(reply.status, { "content-type": "application/json" });
      res.end(JSON.stringify(reply.body));
    });
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const addr = server.address() as AddressInfo;
  base = `http://127.0.0.1:${addr.port}`;
});

afterAll(() => {
  server.close();
});

describe("ApiClient", () => {
  it("posts the session image and returns the parsed body", async () => {
    reply = { status: 200, body: { session_id: "abc", suggested_total_k: 9 } };
    seen.length = 0;
    const client = new ApiClient(base);
    const info = await client.createSession("AAAA");
    expect(info.session_id).toBe("abc");
    expect(seen[0]).toEqual({
      method: "POST",
      path: "/api/session",
      body: { image: "AAAA" },
    });
  });

  it("sends polygon vertices unchanged in image coordinates", async () => {
    reply = { status: 200, body: { pixels: 5, coverage_pct: 1.0 } };
    seen.length = 0;
    const client = new ApiClient(base);
    await client.putPolygonMask("abc", [[4, 4], [12, 4], [8, 12]]);
    expect(seen[0].method).toBe("PUT");
    expect(seen[0].path).toBe("/api/session/abc/mask");
    expect(seen[0].body).toEqual({ polygon: [[4, 4], [12, 4], [8, 12]] });
  });

  it("wraps the error envelope into ApiError", async () => {
    reply = { status: 409, body: { code: "segment_required", message: "segment the image first" } };
    const client = new ApiClient(base);
    const err = await client.explain("abc").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("segment_required");
    expect(err.message).toBe("segment the image first");
  });

  it("falls back to the http status for non-JSON errors", async () => {
    reply = { status: 502, body: "bad gateway" };
    const client = new ApiClient(base);
    const err = await client.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("http_502");
  });

  it("builds per-session artifact urls and strips trailing slashes", () => {
    const client = new ApiClient(`${base}/`);
    expect(client.artifactUrl("abc", "overlay.png"))
      .toBe(`${base}/api/session/abc/artifact/overlay.png`);
  });
});
