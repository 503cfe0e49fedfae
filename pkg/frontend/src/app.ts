import { ApiClient } from "./api.js";
import { Rgb, SketchLayer, StrokeLayer, Tool } from "./canvas.js";
import { ConsoleView, ControlValues, SteeringController } from "./controller.js";

const app = document.getElementById("app")!;
const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(tag: K, className?: string, text?: string) {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function slider(label: string, field: string, min: number, max: number, step: number, value: number) {
  const wrap = el("div", "control");
  const name = el("label", "", label);
  const input = document.createElement("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  const readout = el("span", "readout", String(value));
  input.addEventListener("input", () => (readout.textContent = input.value));
  const error = el("span", "field-error");
  error.dataset.field = field;
  wrap.append(name, input, readout, error);
  return { wrap, input, error };
}

async function boot() {
  const title = el("h1", "", "visioblend console");
  app.append(title);

  const models = await api.models().catch(() => []);
  if (models.length === 0) {
    app.append(el("p", "status", "no model loaded; start the server with a checkpoint"));
    return;
  }
  const { width, height } = models[0];

  const sketch = new SketchLayer(width, height);
  const stroke = new StrokeLayer(width, height);

  const state = {
    tool: "sketch_pen" as Tool,
    brushSize: 1,
    brushColor: [220, 60, 40] as Rgb,
  };

  // layered canvases: stroke colors below, sketch ink on top
  const stack = el("div", "stack");
  const strokeCanvas = document.createElement("canvas");
  const sketchCanvas = document.createElement("canvas");
  for (const c of [strokeCanvas, sketchCanvas]) {
    c.width = width;
    c.height = height;
  }
  stack.append(strokeCanvas, sketchCanvas);

  const strokeCtx = strokeCanvas.getContext("2d")!;
  const sketchCtx = sketchCanvas.getContext("2d")!;

  function paint() {
    const strokeImg = strokeCtx.createImageData(width, height);
    strokeImg.data.set(stroke.rgba);
    strokeCtx.putImageData(strokeImg, 0, 0);
    const sketchImg = sketchCtx.createImageData(width, height);
    for (let i = 0; i < sketch.mask.length; i++) {
      sketchImg.data[i * 4 + 3] = sketch.mask[i] ? 255 : 0;
    }
    sketchCtx.putImageData(sketchImg, 0, 0);
  }

  function canvasPos(e: PointerEvent): [number, number] {
    const rect = sketchCanvas.getBoundingClientRect();
    const x = Math.floor(((e.clientX - rect.left) / rect.width) * width);
    const y = Math.floor(((e.clientY - rect.top) / rect.height) * height);
    return [x, y];
  }

  let last: [number, number] | null = null;
  sketchCanvas.addEventListener("pointerdown", (e) => {
    sketchCanvas.setPointerCapture(e.pointerId);
    const onSketch = state.tool === "sketch_pen" || state.tool === "sketch_eraser";
    (onSketch ? sketch : stroke).beginAction();
    last = canvasPos(e);
    applyAt(last);
  });
  sketchCanvas.addEventListener("pointermove", (e) => {
    if (last === null) return;
    const pos = canvasPos(e);
    const [x0, y0] = last;
    if (state.tool === "sketch_pen") sketch.line(x0, y0, pos[0], pos[1], state.brushSize, true);
    else if (state.tool === "sketch_eraser") sketch.line(x0, y0, pos[0], pos[1], state.brushSize, false);
    else if (state.tool === "stroke_brush") stroke.line(x0, y0, pos[0], pos[1], state.brushSize, state.brushColor);
    else stroke.line(x0, y0, pos[0], pos[1], state.brushSize, null);
    last = pos;
    paint();
  });
  sketchCanvas.addEventListener("pointerup", () => (last = null));

  function applyAt([x, y]: [number, number]) {
    if (state.tool === "sketch_pen") sketch.stamp(x, y, state.brushSize, true);
    else if (state.tool === "sketch_eraser") sketch.stamp(x, y, state.brushSize, false);
    else if (state.tool === "stroke_brush") stroke.stamp(x, y, state.brushSize, state.brushColor);
    else stroke.stamp(x, y, state.brushSize, null);
    paint();
  }

  // tool panel
  const tools = el("div", "panel tools");
  tools.append(el("h2", "", "tools"));
  const toolNames: [Tool, string][] = [
    ["sketch_pen", "sketch pen"],
    ["sketch_eraser", "sketch eraser"],
    ["stroke_brush", "stroke brush"],
    ["stroke_eraser", "stroke eraser"],
  ];
  for (const [value, label] of toolNames) {
    const row = el("label", "tool-row", label);
    const radio = document.createElement("input");
    radio.type = "radio";
    radio.name = "tool";
    radio.checked = value === state.tool;
    radio.addEventListener("change", () => (state.tool = value));
    row.prepend(radio);
    tools.append(row);
  }
  const sizeRow = el("div", "control");
  sizeRow.append(el("label", "", "brush size"));
  const sizeInput = document.createElement("input");
  sizeInput.type = "range";
  sizeInput.min = "1";
  sizeInput.max = "8";
  sizeInput.value = "1";
  sizeInput.addEventListener("input", () => (state.brushSize = Number(sizeInput.value)));
  sizeRow.append(sizeInput);
  const colorInput = document.createElement("input");
  colorInput.type = "color";
  colorInput.value = "#dc3c28";
  colorInput.addEventListener("input", () => {
    const v = colorInput.value;
    state.brushColor = [parseInt(v.slice(1, 3), 16), parseInt(v.slice(3, 5), 16), parseInt(v.slice(5, 7), 16)];
  });
  tools.append(sizeRow, colorInput);

  for (const [layer, label] of [
    [sketch, "sketch"],
    [stroke, "stroke"],
  ] as const) {
    const row = el("div", "layer-buttons");
    const undoBtn = el("button", "", `undo ${label}`);
    undoBtn.addEventListener("click", () => {
      layer.undo();
      paint();
    });
    const clearBtn = el("button", "", `clear ${label}`);
    clearBtn.addEventListener("click", () => {
      layer.clear();
      paint();
    });
    row.append(undoBtn, clearBtn);
    tools.append(row);
  }

  // control sliders and generation
  const controls = el("div", "panel controls");
  controls.append(el("h2", "", "controls"));
  const sSketch = slider("sketch faithfulness", "s_sketch", 0, 10, 0.1, 3);
  const sStroke = slider("stroke faithfulness", "s_stroke", 0, 10, 0.1, 3);
  const realism = slider("realism", "realism", 0, 1, 0.05, 0);
  const seedRow = el("div", "control");
  seedRow.append(el("label", "", "seed"));
  const seedInput = document.createElement("input");
  seedInput.type = "number";
  seedInput.placeholder = "random";
  const seedError = el("span", "field-error");
  seedError.dataset.field = "seed";
  seedRow.append(seedInput, seedError);
  controls.append(sSketch.wrap, sStroke.wrap, realism.wrap, seedRow);

  const generateBtn = el("button", "generate", "generate");
  const progress = document.createElement("progress");
  progress.max = 1;
  progress.value = 0;
  const status = el("p", "status", `model ${models[0].id}, ${width}x${height}, ${models[0].steps} steps`);
  controls.append(generateBtn, progress, status);

  const gallery = el("div", "gallery");

  const view: ConsoleView = {
    setBusy: (busy) => (generateBtn.disabled = busy),
    setProgress: (frac) => (progress.value = frac),
    setStatus: (text) => (status.textContent = text),
    addResult: (pngBase64) => {
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${pngBase64}`;
      img.width = width * 4;
      gallery.prepend(img);
    },
    showFieldError: (field, message) => {
      const target = app.querySelector<HTMLElement>(`.field-error[data-field="${field}"]`);
      if (target) target.textContent = message;
      else status.textContent = message;
    },
    clearFieldErrors: () => {
      for (const node of app.querySelectorAll(".field-error")) node.textContent = "";
    },
  };
  const controller = new SteeringController(api, view);

  generateBtn.addEventListener("click", () => {
    const values: ControlValues = {
      sSketch: Number(sSketch.input.value),
      sStroke: Number(sStroke.input.value),
      realism: Number(realism.input.value),
      seed: seedInput.value === "" ? null : Number(seedInput.value),
    };
    void controller.generate(sketch, stroke, values);
  });

  const main = el("div", "columns");
  main.append(tools, stack, controls);
  app.append(main, el("h2", "", "results"), gallery);
  paint();
}

void boot();
