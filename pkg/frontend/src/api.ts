import type {
  EditOp,
  EditResult,
  ExplainOptions,
  ExplainResult,
  MaskResult,
  SegmentOptions,
  SegmentResult,
  SessionInfo,
} from "./types";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

async function asError(resp: Response): Promise<ApiError> {
  let code = `http_${resp.status}`;
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // not a JSON error envelope; keep the status text
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}/api${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await asError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  createSession(imageB64: string): Promise<SessionInfo> {
    return this.request("POST", "/session", { image: imageB64 });
  }

  /** Vertices in original-image pixel coordinates, [x, y] pairs. */
  putPolygonMask(sid: string, polygon: [number, number][]): Promise<MaskResult> {
    return this.request("PUT", `/session/${sid}/mask`, { polygon });
  }

  putMaskPng(sid: string, maskB64: string): Promise<MaskResult> {
    return this.request("PUT", `/session/${sid}/mask`, { mask: maskB64 });
  }

  segment(sid: string, opts: SegmentOptions): Promise<SegmentResult> {
    return this.request("POST", `/session/${sid}/segment`, opts);
  }

  edit(sid: string, edits: EditOp[]): Promise<EditResult> {
    return this.request("POST", `/session/${sid}/edit`, { edits });
  }

  explain(sid: string, opts: ExplainOptions = {}): Promise<ExplainResult> {
    return this.request("POST", `/session/${sid}/explain`, opts);
  }

  view(sid: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/session/${sid}`);
  }

  artifactUrl(sid: string, name: string): string {
    return `${this.baseUrl}/api/session/${sid}/artifact/${name}`;
  }
}
