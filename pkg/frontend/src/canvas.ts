// Layer rasters for the drawing surface. Both layers live at the model
// resolution advertised by the service and keep their own undo history.
// No DOM here; the app paints these buffers onto canvases.

export type Tool = "sketch_pen" | "sketch_eraser" | "stroke_brush" | "stroke_eraser";
export type Rgb = [number, number, number];

const UNDO_CAP = 50;

function* diskOffsets(size: number): Generator<[number, number]> {
  // size is the brush diameter in pixels; size 1 stamps a single pixel
  const r = size / 2;
  const reach = Math.ceil(r);
  for (let dy = -reach; dy <= reach; dy++) {
    for (let dx = -reach; dx <= reach; dx++) {
      if (dx * dx + dy * dy <= r * r) yield [dx, dy];
    }
  }
}

function* linePoints(x0: number, y0: number, x1: number, y1: number): Generator<[number, number]> {
  const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
  for (let i = 0; i <= steps; i++) {
    yield [Math.round(x0 + ((x1 - x0) * i) / steps), Math.round(y0 + ((y1 - y0) * i) / steps)];
  }
}

/** Binary edge layer: mask[i] = 1 where the pen has drawn. */
export class SketchLayer {
  readonly width: number;
  readonly height: number;
  mask: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.mask = new Uint8Array(width * height);
  }

  /** Snapshot before a gesture; one undo step per call. */
  beginAction() {
    this.undoStack.push(this.mask.slice());
    if (this.undoStack.length > UNDO_CAP) this.undoStack.shift();
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.mask = prev;
    return true;
  }

  stamp(x: number, y: number, size: number, draw: boolean) {
    for (const [dx, dy] of diskOffsets(size)) {
      const px = x + dx;
      const py = y + dy;
      if (px < 0 || py < 0 || px >= this.width || py >= this.height) continue;
      this.mask[py * this.width + px] = draw ? 1 : 0;
    }
  }

  line(x0: number, y0: number, x1: number, y1: number, size: number, draw: boolean) {
    for (const [x, y] of linePoints(x0, y0, x1, y1)) this.stamp(x, y, size, draw);
  }

  clear() {
    this.beginAction();
    this.mask.fill(0);
  }

  isEmpty(): boolean {
    return !this.mask.some((v) => v !== 0);
  }

  /** Export raster: drawn edges black (0), background white (255). */
  grayPixels(): Uint8Array {
    const out = new Uint8Array(this.mask.length);
    for (let i = 0; i < this.mask.length; i++) out[i] = this.mask[i] ? 0 : 255;
    return out;
  }
}

/** Color stroke layer; alpha marks painted pixels. */
export class StrokeLayer {
  readonly width: number;
  readonly height: number;
  rgba: Uint8ClampedArray;
  private undoStack: Uint8ClampedArray[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.rgba = new Uint8ClampedArray(width * height * 4);
  }

  beginAction() {
    this.undoStack.push(this.rgba.slice());
    if (this.undoStack.length > UNDO_CAP) this.undoStack.shift();
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.rgba = prev;
    return true;
  }

  stamp(x: number, y: number, size: number, color: Rgb | null) {
    for (const [dx, dy] of diskOffsets(size)) {
      const px = x + dx;
      const py = y + dy;
      if (px < 0 || py < 0 || px >= this.width || py >= this.height) continue;
      const i = (py * this.width + px) * 4;
      if (color) {
        this.rgba[i] = color[0];
        this.rgba[i + 1] = color[1];
        this.rgba[i + 2] = color[2];
        this.rgba[i + 3] = 255;
      } else {
        this.rgba[i] = this.rgba[i + 1] = this.rgba[i + 2] = this.rgba[i + 3] = 0;
      }
    }
  }

  line(x0: number, y0: number, x1: number, y1: number, size: number, color: Rgb | null) {
    for (const [x, y] of linePoints(x0, y0, x1, y1)) this.stamp(x, y, size, color);
  }

  clear() {
    this.beginAction();
    this.rgba.fill(0);
  }

  isEmpty(): boolean {
    for (let i = 3; i < this.rgba.length; i += 4) {
      if (this.rgba[i] !== 0) return false;
    }
    return true;
  }

  /** Export raster: painted pixels keep their color, the rest are mid-gray
   *  128, which the model reads as "no stroke information here". */
  rgbPixels(): Uint8Array {
    const n = this.width * this.height;
    const out = new Uint8Array(n * 3);
    for (let i = 0; i < n; i++) {
      const painted = this.rgba[i * 4 + 3] !== 0;
      out[i * 3] = painted ? this.rgba[i * 4] : 128;
      out[i * 3 + 1] = painted ? this.rgba[i * 4 + 1] : 128;
      out[i * 3 + 2] = painted ? this.rgba[i * 4 + 2] : 128;
    }
    return out;
  }
}
