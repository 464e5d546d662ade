import { ApiClient, ApiError } from "./api";
import { EditControls } from "./edits";
import { displayToImage, PolygonTool } from "./polygon";
import type {
  EditResult,
  ExplainOptions,
  ExplainResult,
  MaskResult,
  SegmentResult,
  SessionInfo,
} from "./types";

/** Human hint for a failed request; state-machine 409s get the short form. */
export function errorHint(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.code === "segment_required") return "segment first";
    if (err.code === "mask_required") return "draw a mask first";
    return `${err.code}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

function pct(v: number): string {
  return `${v.toFixed(1)}%`;
}

function dataUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

const MARKUP = `
<div class="panel">
  <h2>Image</h2>
  <input id="file-input" type="file" accept="image/*">
  <div id="session-info" class="info"></div>
  <canvas id="image-canvas" width="0" height="0"></canvas>
  <div class="row">
    <button id="btn-clear" type="button">Clear outline</button>
    <button id="btn-submit-mask" type="button" disabled>Use outline as mask</button>
  </div>
  <div id="mask-info" class="info"></div>
</div>
<div class="panel">
  <h2>Superpixels</h2>
  <label>total <input id="total-k" type="number" min="2" max="64" value="15"></label>
  <label>spatial weight <input id="spatial-weight" type="number" min="0" step="0.5" value="1"></label>
  <button id="btn-segment" type="button">Segment</button>
  <div id="segment-info" class="info"></div>
  <img id="labels-img" alt="">
</div>
<div class="panel">
  <h2>Edit region</h2>
  <label>R <input id="dr" type="range" min="-1" max="1" step="0.05" value="0"></label>
  <label>G <input id="dg" type="range" min="-1" max="1" step="0.05" value="0"></label>
  <label>B <input id="db" type="range" min="-1" max="1" step="0.05" value="0"></label>
  <label>dx <input id="dx" type="number" step="1" value="0"></label>
  <label>dy <input id="dy" type="number" step="1" value="0"></label>
  <label>angle <input id="angle" type="number" step="5" value="0"></label>
  <label>power <input id="power" type="number" min="0.1" step="0.1" value="1"></label>
  <label><input id="chk-remove" type="checkbox"> remove</label>
  <button id="btn-apply-edits" type="button">Apply edits</button>
  <div id="edit-info" class="info"></div>
  <img id="edited-img" alt="">
  <table id="report-table"><tbody></tbody></table>
</div>
<div class="panel">
  <h2>Explanation</h2>
  <label>features kept <input id="num-features" type="number" min="1" value="5"></label>
  <label>samples <input id="num-samples" type="number" min="10" value="1000"></label>
  <label>seed <input id="seed" type="number" value="0"></label>
  <button id="btn-explain" type="button">Explain</button>
  <img id="overlay-img" alt="">
  <div class="info">
    <span>positive <b id="cov-pos"></b></span>
    <span>negative <b id="cov-neg"></b></span>
    <span>neutral <b id="cov-neu"></b></span>
  </div>
  <div id="prob-bars"></div>
</div>
<div id="status" class="status"></div>
`;

export class Dashboard {
  readonly api: ApiClient;
  readonly polygon = new PolygonTool();
  readonly controls = new EditControls();

  session: SessionInfo | null = null;
  lastMask: MaskResult | null = null;
  lastSegment: SegmentResult | null = null;
  lastEdit: EditResult | null = null;
  lastExplain: ExplainResult | null = null;
  busy = false;

  private readonly root: HTMLElement;
  private imageUrl: string | null = null;
  private maskSubmitted = false;
  private pending: Promise<void> = Promise.resolve();

  constructor(root: HTMLElement, baseUrl = "") {
    this.root = root;
    this.api = new ApiClient(baseUrl);
    root.innerHTML = MARKUP;
    this.wire();
  }

  el<T extends HTMLElement>(id: string): T {
    const found = this.root.querySelector(`#${id}`);
    if (!found) throw new Error(`missing element #${id}`);
    return found as T;
  }

  private num(id: string): number {
    return Number(this.el<HTMLInputElement>(id).value);
  }

  private setStatus(text: string): void {
    this.el("status").textContent = text;
  }

  /** Run one request; overlapping clicks are ignored while busy. */
  private guard(fn: () => Promise<unknown>): Promise<void> {
    if (this.busy) return this.pending;
    this.pending = (async () => {
      this.busy = true;
      this.root.querySelectorAll("button").forEach((b) => (b.disabled = true));
      try {
        this.setStatus("working…");
        await fn();
        this.setStatus("");
      } catch (err) {
        this.setStatus(errorHint(err));
      } finally {
        this.busy = false;
        this.root.querySelectorAll("button").forEach((b) => (b.disabled = false));
        this.refreshMaskButtons();
      }
    })();
    return this.pending;
  }

  /** Awaitable by tests after dispatching a click. */
  whenIdle(): Promise<void> {
    return this.pending;
  }

  private wire(): void {
    const canvas = this.el<HTMLCanvasElement>("image-canvas");
    canvas.addEventListener("pointerdown", (ev) => {
      if (!this.session) return;
      const rect = canvas.getBoundingClientRect();
      const p = displayToImage(ev.clientX, ev.clientY, rect,
                               this.session.width, this.session.height);
      this.addVertex(p.x, p.y);
    });
    this.el("file-input").addEventListener("change", (ev) => {
      const file = (ev.target as HTMLInputElement).files?.[0];
      if (!file) return;
      const reader = new FileReader();
      reader.onload = () => {
        const url = String(reader.result);
        void this.guard(() => this.loadImage(url.slice(url.indexOf(",") + 1)));
      };
      reader.readAsDataURL(file);
    });
    this.el("btn-clear").addEventListener("click", () => this.clearPolygon());
    this.el("btn-submit-mask").addEventListener("click", () =>
      void this.guard(() => this.submitPolygon()));
    this.el("btn-segment").addEventListener("click", () =>
      void this.guard(() => this.segment()));
    this.el("btn-apply-edits").addEventListener("click", () =>
      void this.guard(() => this.applyEdits()));
    this.el("btn-explain").addEventListener("click", () =>
      void this.guard(() => this.explain()));
    // changing the kept-feature count re-requests the explanation
    this.el("num-features").addEventListener("change", () => {
      if (this.lastExplain) void this.guard(() => this.explain());
    });
  }

  async loadImage(b64: string): Promise<SessionInfo> {
    const info = await this.api.createSession(b64);
    this.session = info;
    this.imageUrl = dataUrl(b64);
    this.polygon.clear();
    this.controls.reset();
    this.lastMask = this.lastSegment = this.lastEdit = this.lastExplain = null;
    this.maskSubmitted = false;
    this.el("session-info").textContent =
      `${info.width}×${info.height}, ${info.channels} channel(s), ` +
      `suggested superpixels: ${info.suggested_total_k}`;
    this.el<HTMLInputElement>("total-k").value = String(info.suggested_total_k);
    const canvas = this.el<HTMLCanvasElement>("image-canvas");
    canvas.width = info.width;
    canvas.height = info.height;
    this.renderCanvas();
    this.renderDownstream();
    this.refreshMaskButtons();
    return info;
  }

  /** Vertex in image pixel coordinates; a redraw replaces a submitted mask. */
  addVertex(x: number, y: number): void {
    if (this.maskSubmitted) {
      this.polygon.clear();
      this.maskSubmitted = false;
    }
    this.polygon.addVertex({ x, y });
    this.renderCanvas();
    this.refreshMaskButtons();
  }

  clearPolygon(): void {
    this.polygon.clear();
    this.maskSubmitted = false;
    this.renderCanvas();
    this.refreshMaskButtons();
  }

  async submitPolygon(): Promise<MaskResult> {
    const sid = this.requireSession();
    const result = await this.api.putPolygonMask(sid, this.polygon.toPayload());
    this.lastMask = result;
    this.maskSubmitted = true;
    // the server dropped everything downstream of the mask; mirror that
    this.lastSegment = this.lastEdit = this.lastExplain = null;
    this.el("mask-info").textContent =
      `${result.pixels} px selected (${pct(result.coverage_pct)} of image)`;
    this.renderDownstream();
    return result;
  }

  async segment(): Promise<SegmentResult> {
    const sid = this.requireSession();
    const result = await this.api.segment(sid, {
      total_k: this.num("total-k"),
      spatial_weight: this.num("spatial-weight"),
    });
    this.lastSegment = result;
    this.lastEdit = this.lastExplain = null;
    this.el("segment-info").textContent =
      `${result.inner_k} inside / ${result.outer_k} outside, ` +
      `${result.superpixels.num_superpixels} total`;
    this.el<HTMLImageElement>("labels-img").src = dataUrl(result.label_png);
    this.renderDownstream();
    return result;
  }

  async applyEdits(): Promise<EditResult> {
    const sid = this.requireSession();
    const result = await this.api.edit(sid, this.controls.toSpec());
    this.lastEdit = result;
    this.el("edit-info").textContent =
      `${result.edits.length} edit(s) applied, ${result.inpainted_pixels} px inpainted`;
    this.el<HTMLImageElement>("edited-img").src = dataUrl(result.edited_png);
    this.renderReport(result);
    return result;
  }

  async explain(opts: ExplainOptions = {}): Promise<ExplainResult> {
    const sid = this.requireSession();
    const result = await this.api.explain(sid, {
      num_features: this.num("num-features"),
      num_samples: this.num("num-samples"),
      seed: this.num("seed"),
      ...opts,
    });
    this.lastExplain = result;
    this.el<HTMLImageElement>("overlay-img").src = dataUrl(result.overlay_png);
    const cov = result.explanation.coverage;
    this.el("cov-pos").textContent = pct(cov.positive_pct);
    this.el("cov-neg").textContent = pct(cov.negative_pct);
    this.el("cov-neu").textContent = pct(cov.neutral_pct);
    this.renderProbBars(result);
    return result;
  }

  private requireSession(): string {
    if (!this.session) throw new Error("load an image first");
    return this.session.session_id;
  }

  private refreshMaskButtons(): void {
    this.el<HTMLButtonElement>("btn-submit-mask").disabled =
      this.busy || !this.session || !this.polygon.canSubmit;
  }

  private renderCanvas(): void {
    const canvas = this.el<HTMLCanvasElement>("image-canvas");
    const ctx = typeof canvas.getContext === "function" ? canvas.getContext("2d") : null;
    if (ctx === null || !this.session) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.imageUrl) {
      const img = new Image();
      img.onload = () => {
        ctx.drawImage(img, 0, 0);
        this.polygon.render(ctx, 1, 1);
      };
      img.src = this.imageUrl;
    }
    this.polygon.render(ctx, 1, 1);
  }

  private renderReport(edit: EditResult | null): void {
    const tbody = this.el("report-table").querySelector("tbody") as HTMLElement;
    tbody.innerHTML = "";
    if (!edit || !edit.report) return;
    for (const row of edit.report) {
      const tr = document.createElement("tr");
      const delta = `${row.delta_pct >= 0 ? "+" : ""}${row.delta_pct.toFixed(1)}`;
      const rank = `${row.rank_change >= 0 ? "+" : ""}${row.rank_change}`;
      for (const cell of [row.class_name, pct(row.original_pct),
                          pct(row.edited_pct), delta, rank]) {
        const td = document.createElement("td");
        td.textContent = String(cell);
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
  }

  private renderProbBars(explain: ExplainResult | null): void {
    const host = this.el("prob-bars");
    host.innerHTML = "";
    if (!explain) return;
    const exp = explain.explanation;
    exp.class_names.forEach((name, i) => {
      const row = document.createElement("div");
      row.className = "bar-row";
      const label = document.createElement("span");
      label.textContent = i === exp.target_class ? `${name} (target)` : name;
      const bar = document.createElement("div");
      bar.className = "bar";
      bar.style.width = `${(100 * exp.baseline_probs[i]).toFixed(1)}%`;
      const value = document.createElement("span");
      value.textContent = pct(100 * exp.baseline_probs[i]);
      row.append(label, bar, value);
      host.appendChild(row);
    });
  }

  private renderDownstream(): void {
    if (!this.lastSegment) {
      this.el("segment-info").textContent = "";
      this.el<HTMLImageElement>("labels-img").removeAttribute("src");
    }
    if (!this.lastEdit) {
      this.el("edit-info").textContent = "";
      this.el<HTMLImageElement>("edited-img").removeAttribute("src");
      this.renderReport(null);
    }
    if (!this.lastExplain) {
      this.el<HTMLImageElement>("overlay-img").removeAttribute("src");
      for (const id of ["cov-pos", "cov-neg", "cov-neu"]) {
        this.el(id).textContent = "";
      }
      this.renderProbBars(null);
    }
  }
}

export function mountDashboard(root: HTMLElement, baseUrl = ""): Dashboard {
  return new Dashboard(root, baseUrl);
}
