/**
 * Wire schema of a hairline edit, matching the server's expectations.
 *
 * `bary` carries two barycentric coordinates; the third is implied. The
 * serializer is key-order stable so an edit survives a parse/serialize
 * round trip byte-exactly.
 */
import { z } from "zod";

export const surfacePointSchema = z.object({
  face: z.number().int().nonnegative(),
  bary: z.tuple([z.number(), z.number()]),
});

export const turningPointSchema = z.object({
  hairlineVertex: z.number().int().nonnegative(),
  curveParam: z.number().min(0).max(1),
});

export const hairlineEditSchema = z.object({
  curve: z.array(surfacePointSchema).min(2),
  turningPoints: z.array(turningPointSchema),
  earMarkers: z.tuple([z.number().int().nonnegative(), z.number().int().nonnegative()]),
});

export type SurfacePointJson = z.infer<typeof surfacePointSchema>;
export type TurningPointJson = z.infer<typeof turningPointSchema>;
export type HairlineEditJson = z.infer<typeof hairlineEditSchema>;

/** Canonical serialization: fixed key order, no whitespace surprises. */
export function serializeEdit(edit: HairlineEditJson): string {
  const curve = edit.curve.map(
    (p) => `{"face":${p.face},"bary":[${p.bary[0]},${p.bary[1]}]}`,
  );
  const tps = edit.turningPoints.map(
    (t) => `{"hairlineVertex":${t.hairlineVertex},"curveParam":${t.curveParam}}`,
  );
  return (
    `{"curve":[${curve.join(",")}],` +
    `"turningPoints":[${tps.join(",")}],` +
    `"earMarkers":[${edit.earMarkers[0]},${edit.earMarkers[1]}]}`
  );
}

export function parseEdit(text: string): HairlineEditJson {
  return hairlineEditSchema.parse(JSON.parse(text));
}
