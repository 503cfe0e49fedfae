import { ApiClient, ApiError, GenerateRequest } from "./api.js";
import { SketchLayer, StrokeLayer } from "./canvas.js";
import { encodePng, toBase64 } from "./png.js";

/** Everything the steering loop tells the page. The DOM app binds these to
 *  elements; tests bind them to plain records. */
export interface ConsoleView {
  setBusy(busy: boolean): void;
  setProgress(frac: number): void;
  setStatus(text: string): void;
  addResult(pngBase64: string): void;
  showFieldError(field: string, message: string): void;
  clearFieldErrors(): void;
}

export interface ControlValues {
  sSketch: number;
  sStroke: number;
  realism: number;
  seed: number | null;
}

export type GenerateOutcome = "done" | "failed" | "rejected" | "busy";

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SteeringController {
  private api: ApiClient;
  private view: ConsoleView;
  private pollMs: number;
  busy = false;

  constructor(api: ApiClient, view: ConsoleView, pollMs = 250) {
    this.api = api;
    this.view = view;
    this.pollMs = pollMs;
  }

  /** Empty layers are omitted from the payload so the server treats the
   *  condition as absent instead of seeing an all-background raster. */
  buildRequest(sketch: SketchLayer, stroke: StrokeLayer, controls: ControlValues): GenerateRequest {
    const req: GenerateRequest = {
      s_sketch: controls.sSketch,
      s_stroke: controls.sStroke,
      realism: controls.realism,
    };
    if (controls.seed !== null) req.seed = controls.seed;
    if (!sketch.isEmpty()) {
      req.sketch_png = toBase64(encodePng(sketch.width, sketch.height, sketch.grayPixels(), 1));
    }
    if (!stroke.isEmpty()) {
      req.stroke_png = toBase64(encodePng(stroke.width, stroke.height, stroke.rgbPixels(), 3));
    }
    return req;
  }

  /** One full generate cycle: submit, poll to a terminal state, deliver the
   *  result to the gallery. Single-flight: calls while busy are dropped. */
  async generate(sketch: SketchLayer, stroke: StrokeLayer, controls: ControlValues): Promise<GenerateOutcome> {
    if (this.busy) return "busy";
    this.busy = true;
    this.view.clearFieldErrors();
    this.view.setBusy(true);
    this.view.setProgress(0);
    this.view.setStatus("submitting");
    try {
      const jobId = await this.api.generate(this.buildRequest(sketch, stroke, controls));
      for (;;) {
        const job = await this.api.job(jobId);
        this.view.setProgress(job.progress);
        if (job.status === "done") {
          this.view.addResult(job.result_png ?? "");
          this.view.setStatus("done");
          return "done";
        }
        if (job.status === "failed") {
          this.view.setStatus(`generation failed: ${job.error ?? "unknown error"}`);
          return "failed";
        }
        this.view.setStatus(job.status);
        if (this.pollMs > 0) await sleep(this.pollMs);
      }
    } catch (e) {
      if (e instanceof ApiError && e.fieldName) {
        this.view.showFieldError(e.fieldName, e.message);
        this.view.setStatus("fix the highlighted field");
      } else {
        this.view.setStatus(`request failed: ${e instanceof Error ? e.message : String(e)}`);
      }
      return "rejected";
    } finally {
      this.busy = false;
      this.view.setBusy(false);
    }
  }
}
