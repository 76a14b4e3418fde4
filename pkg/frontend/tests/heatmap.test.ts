import { describe, expect, it } from "vitest";

import { densityHeatmap } from "../src/heatmap.js";

describe("density heatmap", () => {
  it("identity edit paints uniform white", () => {
    const { faceColors, min, max } = densityHeatmap([0, 0, 0]);
    expect(min).toBe(0);
    expect(max).toBe(0);
    expect(Array.from(faceColors)).toEqual(new Array(27).fill(1));
  });

  it("positive change is red, negative blue", () => {
    const { faceColors } = densityHeatmap([1, -1]);
    // face 0 corner 0: red channel full, others reduced
    expect(faceColors[0]).toBe(1);
    expect(faceColors[1]).toBe(0);
    expect(faceColors[2]).toBe(0);
    // face 1: blue channel full
    expect(faceColors[9]).toBe(0);
    expect(faceColors[10]).toBe(0);
    expect(faceColors[11]).toBe(1);
  });

  it("scales by the payload maximum, not a recomputed value", () => {
    const colors = densityHeatmap([0.5], 1.0);
    expect(colors.faceColors[1]).toBeCloseTo(0.5, 12);
  });

  it("every face gets three identical corners", () => {
    const { faceColors } = densityHeatmap([0.3, -0.7]);
    for (let f = 0; f < 2; f += 1) {
      for (let corner = 1; corner < 3; corner += 1) {
        for (let ch = 0; ch < 3; ch += 1) {
          expect(faceColors[9 * f + 3 * corner + ch]).toBe(faceColors[9 * f + ch]);
        }
      }
    }
  });
});
