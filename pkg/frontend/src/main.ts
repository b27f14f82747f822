/** Browser entry point: two canvas panes driving the suggest/annotate loop. */

import { ApiClient } from "./api.js";
import {
  DEFAULT_ALPHA,
  EllipseDraft,
  beginDraft,
  dragFirstAxis,
  dragSecondAxis,
  draftToEllipse,
  ellipseAxes,
} from "./ellipse.js";
import { SessionController, setOverlay, setOverlayOpacity } from "./state.js";
import { OverlayKind, compositeOver } from "./overlay.js";
import { PaneView, Point, imageToScreen, makeView, panBy, zoomAt } from "./view.js";

interface PaneElements {
  canvas: HTMLCanvasElement;
  image: HTMLImageElement;
  view: PaneView;
}

function drawEllipse(
  ctx: CanvasRenderingContext2D,
  view: PaneView,
  center: Point,
  radii: [number, number],
  rotationRad: number,
  style: string,
): void {
  const c = imageToScreen(view, center);
  ctx.save();
  ctx.strokeStyle = style;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.ellipse(c.x, c.y, radii[0] * view.zoom, radii[1] * view.zoom, rotationRad, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.restore();
}

function drawMarker(ctx: CanvasRenderingContext2D, view: PaneView, p: Point): void {
  const s = imageToScreen(view, p);
  ctx.save();
  ctx.strokeStyle = "#ffcc00";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(s.x - 6, s.y);
  ctx.lineTo(s.x + 6, s.y);
  ctx.moveTo(s.x, s.y - 6);
  ctx.lineTo(s.x, s.y + 6);
  ctx.stroke();
  ctx.restore();
}

export function startApp(root: HTMLElement): void {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "";
  const sessionId = params.get("session");
  if (!sessionId) {
    root.textContent = "missing ?session=<id> query parameter";
    return;
  }
  const api = new ApiClient(apiBase);
  const controller = new SessionController(api, sessionId);

  root.innerHTML = `
    <div style="display:flex;gap:8px">
      <div><div>fixed</div><canvas id="fixed" width="512" height="512"></canvas></div>
      <div><div>moving</div><canvas id="moving" width="512" height="512"></canvas></div>
    </div>
    <div style="margin-top:8px">
      <button id="commit">commit</button>
      <button id="skip">skip</button>
      <label>alpha <input id="alpha" type="number" step="0.01" min="0.001" max="0.5" value="${DEFAULT_ALPHA}"></label>
      <label>overlay
        <select id="overlay-kind">
          <option value="">none</option>
          <option value="error">error</option>
          <option value="entropy">entropy</option>
          <option value="blended">blended</option>
        </select>
      </label>
      <label>opacity <input id="opacity" type="range" min="0" max="1" step="0.05" value="0.5"></label>
      <span id="status"></span>
    </div>`;

  const status = root.querySelector<HTMLSpanElement>("#status")!;
  const alphaInput = root.querySelector<HTMLInputElement>("#alpha")!;
  const panes: Record<"fixed" | "moving", PaneElements> = {
    fixed: { canvas: root.querySelector("#fixed")!, image: new Image(), view: makeView(1) },
    moving: { canvas: root.querySelector("#moving")!, image: new Image(), view: makeView(1) },
  };
  panes.fixed.image.src = api.tileUrl(params.get("fixed") ?? "fixed.png", 0, 0, 512, 512);
  panes.moving.image.src = api.tileUrl(params.get("moving") ?? "moving.png", 0, 0, 512, 512);

  let viewState = controller.current;
  let draft: EllipseDraft | null = null;
  let overlayPixels: Uint8ClampedArray | null = null;

  function render(): void {
    for (const key of ["fixed", "moving"] as const) {
      const pane = panes[key];
      const ctx = pane.canvas.getContext("2d")!;
      ctx.clearRect(0, 0, pane.canvas.width, pane.canvas.height);
      ctx.save();
      ctx.setTransform(pane.view.zoom, 0, 0, pane.view.zoom, pane.view.panX, pane.view.panY);
      if (pane.image.complete && pane.image.naturalWidth > 0) {
        ctx.drawImage(pane.image, 0, 0);
      }
      ctx.restore();
      if (key === "fixed") {
        if (overlayPixels !== null && viewState.overlay.kind !== null) {
          const base = ctx.getImageData(0, 0, pane.canvas.width, pane.canvas.height);
          const blended = compositeOver(
            new Uint8ClampedArray(base.data),
            overlayPixels,
            viewState.overlay.opacity,
          );
          const pixels = blended as Uint8ClampedArray<ArrayBuffer>;
          ctx.putImageData(new ImageData(pixels, pane.canvas.width, pane.canvas.height), 0, 0);
        }
        const sug = controller.current.suggestion;
        if (sug) drawMarker(ctx, pane.view, { x: sug.x[0], y: sug.x[1] });
      } else if (draft !== null) {
        try {
          const e = draftToEllipse(draft, Number(alphaInput.value));
          drawEllipse(ctx, pane.view, e.center, e.radii, e.rotationRad, "#00ccff");
        } catch {
          // radii still below the commit minimum mid-drag: draw nothing
        }
      }
    }
  }

  async function refreshOverlay(): Promise<void> {
    overlayPixels = null;
    const kind = viewState.overlay.kind;
    const transform = params.get("transform");
    if (kind === null || transform === null) return render();
    const img = new Image();
    img.onload = () => {
      const off = document.createElement("canvas");
      off.width = panes.fixed.canvas.width;
      off.height = panes.fixed.canvas.height;
      const octx = off.getContext("2d")!;
      octx.drawImage(img, 0, 0, off.width, off.height);
      overlayPixels = new Uint8ClampedArray(octx.getImageData(0, 0, off.width, off.height).data);
      render();
    };
    img.src = api.mapUrl(sessionId!, kind, transform);
  }

  async function nextSuggestion(): Promise<void> {
    try {
      await controller.refreshSuggestion();
      const sug = controller.current.suggestion!;
      status.textContent = `iteration ${sug.iteration}, delta H ${sug.delta_h.toFixed(3)} bits`;
    } catch (err) {
      status.textContent = String(err);
    }
    draft = null;
    render();
  }

  const moving = panes.moving;
  let dragging: "first" | "second" | "pan" | null = null;
  moving.canvas.addEventListener("pointerdown", (ev) => {
    const p = { x: ev.offsetX, y: ev.offsetY };
    if (ev.button === 1 || ev.altKey) {
      dragging = "pan";
      return;
    }
    try {
      draft = beginDraft(moving.view, p, moving.image.naturalWidth, moving.image.naturalHeight);
      dragging = ev.shiftKey && draft !== null ? "second" : "first";
    } catch (err) {
      status.textContent = String(err);
    }
  });
  moving.canvas.addEventListener("pointermove", (ev) => {
    const p = { x: ev.offsetX, y: ev.offsetY };
    if (dragging === "pan") {
      moving.view = panBy(moving.view, ev.movementX, ev.movementY);
    } else if (dragging === "first" && draft !== null) {
      draft = ev.shiftKey ? dragSecondAxis(draft, moving.view, p) : dragFirstAxis(draft, moving.view, p);
    } else if (dragging === "second" && draft !== null) {
      draft = dragSecondAxis(draft, moving.view, p);
    } else {
      return;
    }
    render();
  });
  moving.canvas.addEventListener("pointerup", () => (dragging = null));
  for (const key of ["fixed", "moving"] as const) {
    panes[key].canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.25 : 0.8;
      panes[key].view = zoomAt(panes[key].view, factor, { x: ev.offsetX, y: ev.offsetY });
      render();
    });
  }

  root.querySelector<HTMLButtonElement>("#commit")!.addEventListener("click", async () => {
    if (draft === null) {
      status.textContent = "click the moving pane first";
      return;
    }
    try {
      await controller.commit(draft);
      await nextSuggestion();
      await refreshOverlay();
    } catch (err) {
      status.textContent = String(err);
    }
  });
  root.querySelector<HTMLButtonElement>("#skip")!.addEventListener("click", async () => {
    try {
      await controller.skip();
      await nextSuggestion();
    } catch (err) {
      status.textContent = String(err);
    }
  });
  root.querySelector<HTMLSelectElement>("#overlay-kind")!.addEventListener("change", (ev) => {
    const value = (ev.target as HTMLSelectElement).value as OverlayKind | "";
    viewState = value === "" ? { ...viewState, overlay: { ...viewState.overlay, kind: null } } : setOverlay({ ...viewState, overlay: { ...viewState.overlay, kind: null } }, value);
    void refreshOverlay();
  });
  root.querySelector<HTMLInputElement>("#opacity")!.addEventListener("input", (ev) => {
    viewState = setOverlayOpacity(viewState, Number((ev.target as HTMLInputElement).value));
    render();
  });

  panes.fixed.image.onload = render;
  panes.moving.image.onload = render;
  void nextSuggestion();
}
