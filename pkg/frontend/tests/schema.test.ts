import { describe, expect, it } from "vitest";

import { hairlineEditSchema, parseEdit, serializeEdit } from "../src/schema.js";

const sample = {
  curve: [
    { face: 12, bary: [0.25, 0.5] as [number, number] },
    { face: 13, bary: [0.1, 0.2] as [number, number] },
    { face: 14, bary: [0, 1] as [number, number] },
  ],
  turningPoints: [{ hairlineVertex: 7, curveParam: 0.5 }],
  earMarkers: [3, 19] as [number, number],
};

describe("hairline edit schema", () => {
  it("accepts a valid edit", () => {
    expect(hairlineEditSchema.parse(sample)).toEqual(sample);
  });

  it("round-trips byte-exactly through serialize/parse", () => {
    const text = serializeEdit(sample);
    const again = serializeEdit(parseEdit(text));
    expect(again).toBe(text);
  });

  it("rejects a curve with fewer than two points", () => {
    expect(() =>
      hairlineEditSchema.parse({ ...sample, curve: [sample.curve[0]] }),
    ).toThrow();
  });

  it("rejects out-of-range curve parameters", () => {
    expect(() =>
      hairlineEditSchema.parse({
        ...sample,
        turningPoints: [{ hairlineVertex: 1, curveParam: 1.5 }],
      }),
    ).toThrow();
  });

  it("rejects negative face ids", () => {
    expect(() =>
      hairlineEditSchema.parse({
        ...sample,
        curve: [{ face: -1, bary: [0, 0] }, sample.curve[1]],
      }),
    ).toThrow();
  });
});
