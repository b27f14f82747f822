import { describe, expect, it } from "vitest";

import {
  EllipseDraft,
  MIN_RADIUS_PX,
  POINT_ONLY_RADIUS_PX,
  beginDraft,
  commitPayload,
  covarianceToEllipse,
  dragFirstAxis,
  dragSecondAxis,
  draftToEllipse,
  ellipseToCovariance,
  gammaFromAlpha2d,
  type Matrix2,
} from "../src/ellipse.js";
import { imageToScreen, makeView } from "../src/view.js";
import fixtures from "./fixtures/ellipse_roundtrip.json";

const DEG = Math.PI / 180;

function angleDistanceMod180(a: number, b: number): number {
  let d = Math.abs(a - b) % Math.PI;
  if (d > Math.PI / 2) d = Math.PI - d;
  return d;
}

describe("ellipse entry", () => {
  it("maps a circle drag of radius r to payload radii (r, r)", () => {
    const view = makeView(1);
    let draft = beginDraft(view, { x: 10, y: 12 }, 64, 64);
    draft = dragFirstAxis(draft, view, { x: 13, y: 12 }); // r = 3 along +x
    const e = draftToEllipse(draft);
    expect(e.radii[0]).toBeCloseTo(3, 12);
    expect(e.radii[1]).toBeCloseTo(3, 12); // second axis defaults to the first
    expect(e.rotationRad).toBeCloseTo(0, 12);
  });

  it("uses a default small circle in point-only mode", () => {
    const view = makeView(1);
    const draft = beginDraft(view, { x: 5, y: 5 }, 64, 64);
    const e = draftToEllipse(draft);
    expect(e.radii).toEqual([POINT_ONLY_RADIUS_PX, POINT_ONLY_RADIUS_PX]);
  });

  it("rejects radii below the commit minimum", () => {
    const view = makeView(1);
    let draft = beginDraft(view, { x: 5, y: 5 }, 64, 64);
    draft = dragFirstAxis(draft, view, { x: 5 + 0.9 * MIN_RADIUS_PX, y: 5 });
    expect(() => draftToEllipse(draft)).toThrow(RangeError);
  });

  it("rejects clicks outside the image", () => {
    const view = makeView(2, 10, 10);
    expect(() => beginDraft(view, { x: 9, y: 9 }, 32, 32)).toThrow(RangeError);
    expect(() => beginDraft(view, { x: 11, y: 11 }, 32, 32)).not.toThrow();
  });

  it("builds identical payloads for the same image pixel at two zoom levels", () => {
    // identical gesture in image space, performed under two different views
    const gestureImage = {
      center: { x: 15, y: 20 },
      firstTip: { x: 19, y: 23 },
      secondTip: { x: 13, y: 21.5 },
    };
    const suggestion: [number, number] = [14.5, 20.25];
    const payloads = [makeView(1), makeView(3.5, -40, 12)].map((view) => {
      let draft = beginDraft(view, imageToScreen(view, gestureImage.center), 64, 64);
      draft = dragFirstAxis(draft, view, imageToScreen(view, gestureImage.firstTip));
      draft = dragSecondAxis(draft, view, imageToScreen(view, gestureImage.secondTip));
      return commitPayload(suggestion, draft);
    });
    const [p1, p2] = payloads;
    expect(p1!.x).toEqual(p2!.x);
    expect(p1!.y[0]).toBeCloseTo(p2!.y[0]!, 9);
    expect(p1!.y[1]).toBeCloseTo(p2!.y[1]!, 9);
    for (let i = 0; i < 2; i++) {
      expect(p1!.ellipse.radii[i]).toBeCloseTo(p2!.ellipse.radii[i]!, 9);
      for (let j = 0; j < 2; j++) {
        expect(p1!.ellipse.axes[i]![j]).toBeCloseTo(p2!.ellipse.axes[i]![j]!, 9);
      }
    }
  });

  it("matches the 2-D gamma closed form", () => {
    expect(gammaFromAlpha2d(0.01) ** 2).toBeCloseTo(9.2103, 3);
    expect(() => gammaFromAlpha2d(0)).toThrow(RangeError);
    expect(() => gammaFromAlpha2d(1)).toThrow(RangeError);
  });
});

describe("server round-trip (fixtures generated by the API implementation)", () => {
  it("reproduces the server covariance from drawn ellipse parameters", () => {
    for (const f of fixtures) {
      const sigma = ellipseToCovariance({
        center: { x: f.center[0]!, y: f.center[1]! },
        radii: [f.radii[0]!, f.radii[1]!],
        rotationRad: f.rotationRad,
        alpha: f.alpha,
      });
      for (let i = 0; i < 2; i++) {
        for (let j = 0; j < 2; j++) {
          expect(sigma[i]![j]).toBeCloseTo(f.sigma[i]![j]!, 9);
        }
      }
    }
  });

  it("re-renders the server sigma within 0.5 px in radii and 2 degrees in rotation", () => {
    for (const f of fixtures) {
      const back = covarianceToEllipse(
        f.sigma as Matrix2,
        { x: f.center[0]!, y: f.center[1]! },
        f.alpha,
      );
      expect(Math.abs(back.radii[0] - f.radii[0]!)).toBeLessThan(0.5);
      expect(Math.abs(back.radii[1] - f.radii[1]!)).toBeLessThan(0.5);
      expect(angleDistanceMod180(back.rotationRad, f.rotationRad)).toBeLessThan(2 * DEG);
      // and the client eigendecomposition agrees with the server's
      expect(back.radii[0]).toBeCloseTo(f.serverRadii[0]!, 6);
      expect(back.radii[1]).toBeCloseTo(f.serverRadii[1]!, 6);
      expect(angleDistanceMod180(back.rotationRad, f.serverRotationRad)).toBeLessThan(1e-6);
    }
  });

  it("survives a local draw -> covariance -> ellipse round-trip for random ellipses", () => {
    let seed = 7;
    const rand = () => (seed = (seed * 1103515245 + 12345) % 2 ** 31) / 2 ** 31;
    for (let i = 0; i < 100; i++) {
      const drawn = {
        center: { x: 10 + 20 * rand(), y: 10 + 20 * rand() },
        radii: [2 + 6 * rand(), 0.6 + 1.2 * rand()] as [number, number],
        rotationRad: Math.PI * rand(),
        alpha: 0.01,
      };
      drawn.radii[1] *= drawn.radii[0] * 0.4; // keep axes distinct
      const back = covarianceToEllipse(ellipseToCovariance(drawn), drawn.center, drawn.alpha);
      const radiiSorted = [...drawn.radii].sort((a, b) => b - a);
      expect(back.radii[0]).toBeCloseTo(radiiSorted[0]!, 8);
      expect(back.radii[1]).toBeCloseTo(radiiSorted[1]!, 8);
      expect(angleDistanceMod180(back.rotationRad, drawn.rotationRad)).toBeLessThan(1e-8);
    }
  });

  it("handles isotropic and axis-aligned covariances", () => {
    const iso = covarianceToEllipse(
      [
        [4, 0],
        [0, 4],
      ],
      { x: 0, y: 0 },
      0.01,
    );
    expect(iso.radii[0]).toBeCloseTo(iso.radii[1], 12);
    const axis = covarianceToEllipse(
      [
        [1, 0],
        [0, 9],
      ],
      { x: 0, y: 0 },
      0.01,
    );
    expect(axis.rotationRad).toBeCloseTo(Math.PI / 2, 12);
    expect(() =>
      covarianceToEllipse(
        [
          [1, 2],
          [2, 1],
        ],
        { x: 0, y: 0 },
      ),
    ).toThrow(RangeError);
  });
});
