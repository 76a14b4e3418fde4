/** Per-triangle density-change colors for the scalp preview.
 *
 * Diverging blue/white/red ramp: negative change (thinning) maps to blue,
 * positive (crowding) to red. Values come straight from the server payload;
 * nothing is recomputed client-side.
 */

export interface HeatmapColors {
  /** RGB per face corner, flattened (faces * 9 floats) for non-indexed meshes */
  faceColors: Float32Array;
  min: number;
  max: number;
}

function ramp(t: number): [number, number, number] {
  // t in [-1, 1]: blue -> white -> red
  const c = Math.max(-1, Math.min(1, t));
  if (c < 0) {
    return [1 + c, 1 + c, 1];
  }
  return [1, 1 - c, 1 - c];
}

export function densityHeatmap(values: number[], scale?: number): HeatmapColors {
  const limit = scale ?? Math.max(1e-12, ...values.map((v) => Math.abs(v)));
  const colors = new Float32Array(values.length * 9);
  values.forEach((v, f) => {
    const [r, g, b] = ramp(v / limit);
    for (let corner = 0; corner < 3; corner += 1) {
      const o = 9 * f + 3 * corner;
      colors[o] = r;
      colors[o + 1] = g;
      colors[o + 2] = b;
    }
  });
  return {
    faceColors: colors,
    min: Math.min(0, ...values),
    max: Math.max(0, ...values),
  };
}
