/** Confidence-ellipse entry: drag gestures in screen space, payloads in image space. */

import { PaneView, Point, insideImage, screenToImage } from "./view.js";

export const DEFAULT_ALPHA = 0.01;
/** Smallest committable semi-axis, in image pixels. */
export const MIN_RADIUS_PX = 0.5;
/** Radius of the default circle used in point-only mode, in image pixels. */
export const POINT_ONLY_RADIUS_PX = 1.0;

export type Matrix2 = [[number, number], [number, number]];

/** In-progress ellipse, all coordinates in image space. */
export interface EllipseDraft {
  center: Point;
  /** Tip of the first semi-axis drag; null until dragged (point-only mode). */
  firstAxisTip: Point | null;
  /** Length of the second semi-axis; null defaults to a circle. */
  secondRadius: number | null;
}

export interface EllipseParams {
  center: Point;
  /** Semi-axis lengths, first then second. */
  radii: [number, number];
  /** Orientation of the first semi-axis, radians, in [0, pi). */
  rotationRad: number;
  alpha: number;
}

/** Wire format of the `ellipse` field accepted by POST /v1/sessions/{id}/annotations. */
export interface EllipseWire {
  axes: Matrix2;
  radii: [number, number];
  alpha: number;
}

export interface AnnotationPayload {
  x: [number, number];
  y: [number, number];
  ellipse: EllipseWire;
}

/**
 * Scale between confidence-ellipse radii and covariance standard deviations
 * in 2-D: radius = gamma * sqrt(eigenvalue), with
 * P(chi2_2 <= gamma^2) = 1 - alpha, so gamma = sqrt(-2 ln alpha).
 */
export function gammaFromAlpha2d(alpha: number): number {
  if (!(alpha > 0 && alpha < 1)) {
    throw new RangeError(`alpha must be in (0, 1), got ${alpha}`);
  }
  return Math.sqrt(-2 * Math.log(alpha));
}

/** Begin a draft at a screen click; rejects clicks outside the image. */
export function beginDraft(
  view: PaneView,
  screenPoint: Point,
  imageWidth: number,
  imageHeight: number,
): EllipseDraft {
  const center = screenToImage(view, screenPoint);
  if (!insideImage(center, imageWidth, imageHeight)) {
    throw new RangeError(
      `click at image (${center.x.toFixed(1)}, ${center.y.toFixed(1)}) is outside the ${imageWidth}x${imageHeight} image`,
    );
  }
  return { center, firstAxisTip: null, secondRadius: null };
}

/** Drag out the first semi-axis: sets both its length and the rotation. */
export function dragFirstAxis(draft: EllipseDraft, view: PaneView, screenPoint: Point): EllipseDraft {
  return { ...draft, firstAxisTip: screenToImage(view, screenPoint) };
}

/** Modifier-drag for the second semi-axis: only its distance to the center matters. */
export function dragSecondAxis(draft: EllipseDraft, view: PaneView, screenPoint: Point): EllipseDraft {
  const p = screenToImage(view, screenPoint);
  const r = Math.hypot(p.x - draft.center.x, p.y - draft.center.y);
  return { ...draft, secondRadius: r };
}

/** Resolve a draft into committable ellipse parameters. */
export function draftToEllipse(draft: EllipseDraft, alpha = DEFAULT_ALPHA): EllipseParams {
  let radii: [number, number];
  let rotationRad: number;
  if (draft.firstAxisTip === null) {
    // point-only mode: default small circle
    radii = [POINT_ONLY_RADIUS_PX, POINT_ONLY_RADIUS_PX];
    rotationRad = 0;
  } else {
    const dx = draft.firstAxisTip.x - draft.center.x;
    const dy = draft.firstAxisTip.y - draft.center.y;
    const first = Math.hypot(dx, dy);
    radii = [first, draft.secondRadius ?? first];
    rotationRad = ((Math.atan2(dy, dx) % Math.PI) + Math.PI) % Math.PI;
  }
  if (radii[0] < MIN_RADIUS_PX || radii[1] < MIN_RADIUS_PX) {
    throw new RangeError(`ellipse radii (${radii[0]}, ${radii[1]}) below the ${MIN_RADIUS_PX} px minimum`);
  }
  return { center: draft.center, radii, rotationRad, alpha };
}

/** Axis direction rows for a rotation: first row along the first semi-axis. */
export function ellipseAxes(rotationRad: number): Matrix2 {
  const c = Math.cos(rotationRad);
  const s = Math.sin(rotationRad);
  return [
    [c, s],
    [-s, c],
  ];
}

/** Covariance implied by an ellipse: sum_i (r_i / gamma)^2 a_i a_i^T. */
export function ellipseToCovariance(e: EllipseParams): Matrix2 {
  const gamma = gammaFromAlpha2d(e.alpha);
  const axes = ellipseAxes(e.rotationRad);
  const out: Matrix2 = [
    [0, 0],
    [0, 0],
  ];
  for (let i = 0; i < 2; i++) {
    const scale = (e.radii[i]! / gamma) ** 2;
    const a = axes[i] as [number, number];
    out[0][0] += scale * a[0] * a[0];
    out[0][1] += scale * a[0] * a[1];
    out[1][1] += scale * a[1] * a[1];
  }
  out[1][0] = out[0][1];
  return out;
}

/**
 * Re-render the server-confirmed covariance as an ellipse: closed-form 2x2
 * eigendecomposition, radii descending, rotation of the major axis in [0, pi).
 */
export function covarianceToEllipse(
  sigma: Matrix2,
  center: Point,
  alpha = DEFAULT_ALPHA,
): EllipseParams {
  const [[a, b], [b2, c]] = sigma;
  if (Math.abs(b - b2) > 1e-9) {
    throw new RangeError("covariance must be symmetric");
  }
  const mean = (a + c) / 2;
  const half = Math.hypot((a - c) / 2, b);
  const l1 = mean + half;
  const l2 = mean - half;
  if (l2 < 0) {
    throw new RangeError("covariance must be positive semi-definite");
  }
  let rotationRad: number;
  if (half < 1e-12) {
    rotationRad = 0; // isotropic: orientation is arbitrary
  } else {
    rotationRad = ((Math.atan2(l1 - a, b) % Math.PI) + Math.PI) % Math.PI;
    if (Math.abs(b) < 1e-12) rotationRad = a >= c ? 0 : Math.PI / 2;
  }
  const gamma = gammaFromAlpha2d(alpha);
  return {
    center,
    radii: [gamma * Math.sqrt(l1), gamma * Math.sqrt(l2)],
    rotationRad,
    alpha,
  };
}

/**
 * Build the annotation request. Everything is already in image coordinates,
 * so the payload is independent of the pane's pan/zoom by construction.
 */
export function commitPayload(
  suggestionX: [number, number],
  draft: EllipseDraft,
  alpha = DEFAULT_ALPHA,
): AnnotationPayload {
  const e = draftToEllipse(draft, alpha);
  return {
    x: suggestionX,
    y: [e.center.x, e.center.y],
    ellipse: { axes: ellipseAxes(e.rotationRad), radii: e.radii, alpha: e.alpha },
  };
}
