/** Pan/zoom view math for an image pane. screen = image * zoom + pan. */

export interface Point {
  x: number;
  y: number;
}

export interface PaneView {
  /** Pixels of screen per pixel of image; > 0. */
  zoom: number;
  /** Screen position of the image origin. */
  panX: number;
  panY: number;
}

export const IDENTITY_VIEW: PaneView = { zoom: 1, panX: 0, panY: 0 };

export function makeView(zoom = 1, panX = 0, panY = 0): PaneView {
  if (!(zoom > 0) || !Number.isFinite(zoom)) {
    throw new RangeError(`zoom must be positive and finite, got ${zoom}`);
  }
  return { zoom, panX, panY };
}

export function imageToScreen(view: PaneView, p: Point): Point {
  return { x: p.x * view.zoom + view.panX, y: p.y * view.zoom + view.panY };
}

export function screenToImage(view: PaneView, p: Point): Point {
  return { x: (p.x - view.panX) / view.zoom, y: (p.y - view.panY) / view.zoom };
}

export function panBy(view: PaneView, dx: number, dy: number): PaneView {
  return { zoom: view.zoom, panX: view.panX + dx, panY: view.panY + dy };
}

/** Rescale the view so the image point under screenAnchor stays put. */
export function zoomAt(view: PaneView, factor: number, screenAnchor: Point): PaneView {
  const zoom = view.zoom * factor;
  if (!(zoom > 0) || !Number.isFinite(zoom)) {
    throw new RangeError(`zoom factor ${factor} leaves an invalid zoom`);
  }
  const anchor = screenToImage(view, screenAnchor);
  return {
    zoom,
    panX: screenAnchor.x - anchor.x * zoom,
    panY: screenAnchor.y - anchor.y * zoom,
  };
}

export function insideImage(p: Point, width: number, height: number): boolean {
  return p.x >= 0 && p.y >= 0 && p.x <= width - 1 && p.y <= height - 1;
}
