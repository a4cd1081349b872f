import { ServiceClient } from "./api.js";
import { renderOverlay } from "./overlay.js";
import { Session, buildMetricsPanel } from "./session.js";
import type { ConfigOverrides } from "./types.js";

const client = new ServiceClient("");
const session = new Session(client);

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status") as HTMLElement;
const metricsBox = document.getElementById("metrics") as HTMLElement;
const runButton = document.getElementById("run") as HTMLButtonElement;
const clearButton = document.getElementById("clear") as HTMLButtonElement;
const imageInput = document.getElementById("image-file") as HTMLInputElement;
const truthInput = document.getElementById("truth-file") as HTMLInputElement;

let baseImage: HTMLImageElement | null = null;
let maskImage: HTMLImageElement | null = null;
let dragIndex = -1;

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "error" : "";
}

function redraw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (session.layers.image && baseImage) {
    ctx.drawImage(baseImage, 0, 0);
  }
  if (session.layers.resultContour && maskImage) {
    ctx.globalAlpha = 0.25;
    ctx.drawImage(maskImage, 0, 0);
    ctx.globalAlpha = 1.0;
  }
  renderOverlay(ctx, session);
  renderMetrics();
}

function renderMetrics(): void {
  const panel = buildMetricsPanel(session.result);
  const rows = [
    `<tr><td>status</td><td>${session.jobStatus ?? "-"}</td></tr>`,
    `<tr><td>iterations</td><td>${panel.iterations ?? "-"}</td></tr>`,
    `<tr><td>converged</td><td>${panel.converged ?? "-"}</td></tr>`,
  ];
  if (panel.hasMetrics) {
    rows.push(
      `<tr><td>Dice</td><td>${panel.dice}</td></tr>`,
      `<tr><td>Jaccard</td><td>${panel.jaccard}</td></tr>`,
      `<tr><td>Mean distance</td><td>${panel.meanDistance}</td></tr>`,
    );
  }
  metricsBox.innerHTML = `<table>${rows.join("")}</table>`;
  if (session.lastError) {
    metricsBox.innerHTML += `<div class="error">${session.lastError.code}: ${session.lastError.message}</div>`;
  }
}

function canvasPoint(event: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * canvas.width,
    y: ((event.clientY - rect.top) / rect.height) * canvas.height,
  };
}

canvas.addEventListener("mousedown", (event) => {
  const { x, y } = canvasPoint(event);
  const hit = session.hitTest(x, y);
  if (hit >= 0) {
    dragIndex = hit;
  } else {
    session.placePoint(x, y);
    redraw();
  }
});

canvas.addEventListener("mousemove", (event) => {
  if (dragIndex < 0) {
    return;
  }
  const { x, y } = canvasPoint(event);
  session.movePoint(dragIndex, x, y);
  redraw();
});

window.addEventListener("mouseup", () => {
  dragIndex = -1;
});

canvas.addEventListener("contextmenu", (event) => {
  event.preventDefault();
  const { x, y } = canvasPoint(event);
  const hit = session.hitTest(x, y);
  if (hit >= 0) {
    session.removePoint(hit);
    redraw();
  }
});

async function uploadFile(file: File): Promise<{ image_id: string; width: number; height: number }> {
  const data = await file.arrayBuffer();
  const type = file.name.endsWith(".pgm") ? "image/x-portable-graymap" : "image/png";
  return client.uploadImage(data, type);
}

imageInput.addEventListener("change", async () => {
  const file = imageInput.files?.[0];
  if (!file) {
    return;
  }
  try {
    const uploaded = await uploadFile(file);
    session.setImage(uploaded.image_id, uploaded.width, uploaded.height);
    canvas.width = uploaded.width;
    canvas.height = uploaded.height;
    maskImage = null;
    baseImage = new Image();
    baseImage.onload = redraw;
    baseImage.src = client.imageUrl(uploaded.image_id);
    setStatus(`image ${uploaded.image_id.slice(0, 12)} (${uploaded.width}x${uploaded.height}); click 6-10 points`);
  } catch (err) {
    setStatus(String(err), true);
  }
});

truthInput.addEventListener("change", async () => {
  const file = truthInput.files?.[0];
  if (!file) {
    session.attachTruth(null);
    return;
  }
  try {
    const uploaded = await uploadFile(file);
    session.attachTruth(uploaded.image_id);
    setStatus("truth mask attached; metrics will be reported");
  } catch (err) {
    setStatus(String(err), true);
  }
});

function readConfig(): ConfigOverrides {
  const config: ConfigOverrides = {};
  const sigma = (document.getElementById("sigma") as HTMLInputElement).value;
  const featureSet = (document.getElementById("feature-set") as HTMLSelectElement).value;
  const weightMode = (document.getElementById("weight-mode") as HTMLSelectElement).value;
  if (sigma) {
    config.weights = { ...(config.weights ?? {}), sigma: Number(sigma) };
  }
  if (featureSet !== "both") {
    config.feature_set = featureSet as ConfigOverrides["feature_set"];
  }
  if (weightMode !== "both") {
    config.weights = { ...(config.weights ?? {}), weight_mode: weightMode as "pixel" | "regional" };
  }
  return config;
}

runButton.addEventListener("click", async () => {
  if (!session.canRun()) {
    setStatus("place at least 3 points first", true);
    return;
  }
  session.config = readConfig();
  setStatus("running...");
  runButton.disabled = true;
  try {
    const doc = await session.run();
    if (doc?.status === "done" && session.latestJobId) {
      maskImage = new Image();
      maskImage.onload = redraw;
      maskImage.src = client.maskUrl(session.latestJobId);
      setStatus(`done in ${doc.result?.iterations} iterations`);
    } else if (doc?.status === "failed") {
      setStatus(`${doc.error?.code}: ${doc.error?.message}`, true);
    }
  } catch (err) {
    setStatus(String(err), true);
  } finally {
    runButton.disabled = false;
    redraw();
  }
});

clearButton.addEventListener("click", () => {
  session.points = [];
  redraw();
});

for (const name of ["image", "initSpline", "resultContour", "ghostContour", "truth"] as const) {
  const box = document.getElementById(`layer-${name}`) as HTMLInputElement | null;
  box?.addEventListener("change", () => {
    session.toggleLayer(name);
    redraw();
  });
}

client.health().then(
  (h) => setStatus(`service ok (${JSON.stringify(h)}); load an image to begin`),
  () => setStatus("service unreachable", true),
);
