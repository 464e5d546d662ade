// Freehand polygon state plus the display-to-image coordinate mapping.
// The server rasterizes the polygon; this module never fills pixels itself.

export interface Point {
  x: number;
  y: number;
}

export const MIN_VERTICES = 3;

/**
 * Map a pointer event position to original-image pixel coordinates,
 * independent of how large the canvas is displayed. Results are clamped
 * to the image bounds so edge clicks stay valid.
 */
export function displayToImage(
  clientX: number,
  clientY: number,
  rect: { left: number; top: number; width: number; height: number },
  imageWidth: number,
  imageHeight: number,
): Point {
  if (rect.width <= 0 || rect.height <= 0) {
    throw new RangeError("canvas has no layout size");
  }
  const x = ((clientX - rect.left) / rect.width) * imageWidth;
  const y = ((clientY - rect.top) / rect.height) * imageHeight;
  return {
    x: Math.min(Math.max(x, 0), imageWidth),
    y: Math.min(Math.max(y, 0), imageHeight),
  };
}

/** Click-to-add-vertex polygon; a redraw starts from an empty list. */
export class PolygonTool {
  private verts: Point[] = [];

  get vertices(): readonly Point[] {
    return this.verts;
  }

  get canSubmit(): boolean {
    return this.verts.length >= MIN_VERTICES;
  }

  addVertex(p: Point): void {
    this.verts.push({ x: p.x, y: p.y });
  }

  /** Drop a vertex while drawing; no-op when empty. */
  undo(): void {
    this.verts.pop();
  }

  clear(): void {
    this.verts = [];
  }

  /** Wire format: [x, y] pairs in image pixel space. */
  toPayload(): [number, number][] {
    if (!this.canSubmit) {
      throw new RangeError(`polygon needs at least ${MIN_VERTICES} vertices`);
    }
    return this.verts.map((p) => [p.x, p.y]);
  }

  /** Draw the in-progress outline; skipped when no 2d context exists. */
  render(ctx: CanvasRenderingContext2D | null, scaleX: number, scaleY: number): void {
    if (ctx === null || this.verts.length === 0) return;
    ctx.strokeStyle = "#ffd400";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(this.verts[0].x * scaleX, this.verts[0].y * scaleY);
    for (const p of this.verts.slice(1)) {
      ctx.lineTo(p.x * scaleX, p.y * scaleY);
    }
    if (this.canSubmit) ctx.closePath();
    ctx.stroke();
  }
}
