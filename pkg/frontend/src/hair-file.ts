/** Reader for the binary hair format served by the result endpoint
 * (magic "HAIR", u32 version, u32 strand count, per strand u32 count and
 * count*3 f32 positions, little-endian). */

export interface HairFile {
  strandOffsets: Uint32Array; // length strands + 1
  positions: Float32Array; // particles * 3
}

export function parseHairFile(buffer: ArrayBuffer): HairFile {
  const view = new DataView(buffer);
  if (view.getUint32(0, false) !== 0x48414952) {
    // "HAIR" big-endian read of the magic bytes
    throw new Error("bad hair file magic");
  }
  const version = view.getUint32(4, true);
  if (version !== 1) {
    throw new Error(`unsupported hair file version ${version}`);
  }
  const strands = view.getUint32(8, true);
  const offsets = new Uint32Array(strands + 1);
  const chunks: Float32Array[] = [];
  let cursor = 12;
  let total = 0;
  for (let s = 0; s < strands; s += 1) {
    const count = view.getUint32(cursor, true);
    cursor += 4;
    chunks.push(new Float32Array(buffer.slice(cursor, cursor + count * 12)));
    cursor += count * 12;
    total += count;
    offsets[s + 1] = total;
  }
  if (cursor !== buffer.byteLength) {
    throw new Error("trailing bytes in hair file");
  }
  const positions = new Float32Array(total * 3);
  let at = 0;
  for (const chunk of chunks) {
    positions.set(chunk, at);
    at += chunk.length;
  }
  return { strandOffsets: offsets, positions };
}

/** Mean per-particle distance between two hair files with equal topology. */
export function meanParticleDistance(a: HairFile, b: HairFile): number {
  if (a.positions.length !== b.positions.length) {
    throw new Error("hair files differ in particle count");
  }
  let sum = 0;
  const n = a.positions.length / 3;
  for (let i = 0; i < n; i += 1) {
    const dx = a.positions[3 * i] - b.positions[3 * i];
    const dy = a.positions[3 * i + 1] - b.positions[3 * i + 1];
    const dz = a.positions[3 * i + 2] - b.positions[3 * i + 2];
    sum += Math.sqrt(dx * dx + dy * dy + dz * dz);
  }
  return sum / n;
}
