/** Heat-map overlay compositing over the fixed pane. */

export type OverlayKind = "error" | "entropy" | "blended";

export interface OverlayState {
  kind: OverlayKind | null;
  /** Global opacity multiplier in [0, 1]. */
  opacity: number;
}

export function makeOverlayState(kind: OverlayKind | null = null, opacity = 0.5): OverlayState {
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new RangeError(`overlay opacity must be in [0, 1], got ${opacity}`);
  }
  return { kind, opacity };
}

export function withOpacity(state: OverlayState, opacity: number): OverlayState {
  return makeOverlayState(state.kind, opacity);
}

export function toggleOverlay(state: OverlayState, kind: OverlayKind): OverlayState {
  return makeOverlayState(state.kind === kind ? null : kind, state.opacity);
}

/**
 * Source-over compositing of an RGBA overlay onto an RGBA base, both flat
 * [r, g, b, a, ...] arrays scaled 0-255, with a global opacity multiplier.
 * Returns a new array; inputs are never mutated.
 */
export function compositeOver(
  base: Uint8ClampedArray,
  overlay: Uint8ClampedArray,
  opacity: number,
): Uint8ClampedArray {
  if (base.length !== overlay.length || base.length % 4 !== 0) {
    throw new RangeError("base and overlay must be equal-length RGBA buffers");
  }
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new RangeError(`overlay opacity must be in [0, 1], got ${opacity}`);
  }
  const out = new Uint8ClampedArray(base.length);
  for (let i = 0; i < base.length; i += 4) {
    const a = (opacity * overlay[i + 3]!) / 255;
    for (let ch = 0; ch < 3; ch++) {
      out[i + ch] = a * overlay[i + ch]! + (1 - a) * base[i + ch]!;
    }
    out[i + 3] = 255 * (a + (base[i + 3]! / 255) * (1 - a));
  }
  return out;
}
