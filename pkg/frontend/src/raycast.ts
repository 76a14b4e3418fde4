/** Pointer-to-surface snapping against the head mesh.
 *
 * Drawing works on SurfacePoints (face + barycentric), never raw 3D: every
 * control point is the exact hit of a camera ray with a head triangle, so
 * exported curves always lie on the surface.
 */
import {
  BufferAttribute,
  BufferGeometry,
  Camera,
  Mesh,
  MeshBasicMaterial,
  Raycaster,
  Triangle,
  Vector2,
  Vector3,
} from "three";

import type { HeadPayload } from "./api.js";
import type { SurfacePointJson } from "./schema.js";

export interface SurfaceHit {
  /** face index into the session body mesh (parent ids, not patch-local) */
  face: number;
  bary: [number, number, number];
  position: Vector3;
}

export class HeadSurface {
  readonly mesh: Mesh;
  private readonly raycaster = new Raycaster();
  private readonly positions: Float32Array;
  private readonly faces: number[][];
  private readonly parentFaces: number[];

  constructor(head: HeadPayload) {
    this.faces = head.faces;
    this.parentFaces = head.parentFaces;
    this.positions = new Float32Array(head.vertices.flat());
    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(this.positions, 3));
    geometry.setIndex(head.faces.flat());
    geometry.computeVertexNormals();
    this.mesh = new Mesh(geometry, new MeshBasicMaterial());
  }

  vertex(i: number): Vector3 {
    return new Vector3(
      this.positions[3 * i],
      this.positions[3 * i + 1],
      this.positions[3 * i + 2],
    );
  }

  /** Snap a normalized device coordinate to the surface; null on miss. */
  pick(ndc: Vector2, camera: Camera): SurfaceHit | null {
    this.raycaster.setFromCamera(ndc, camera);
    const hits = this.raycaster.intersectObject(this.mesh, false);
    if (hits.length === 0 || hits[0].faceIndex === undefined || hits[0].faceIndex === null) {
      return null;
    }
    return this.hitToSurface(hits[0].faceIndex, hits[0].point);
  }

  /** Snap an arbitrary 3D point to its closest position on a known face. */
  hitToSurface(faceIndex: number, point: Vector3): SurfaceHit {
    const [ia, ib, ic] = this.faces[faceIndex];
    const tri = new Triangle(this.vertex(ia), this.vertex(ib), this.vertex(ic));
    const snapped = new Vector3();
    tri.closestPointToPoint(point, snapped);
    const bc = new Vector3();
    tri.getBarycoord(snapped, bc);
    return {
      face: this.parentFaces[faceIndex],
      bary: [bc.x, bc.y, bc.z],
      position: snapped,
    };
  }

  /** Exact surface point of a patch vertex (used for identity edits). */
  vertexSurfacePoint(vertexIndex: number): SurfaceHit {
    for (let f = 0; f < this.faces.length; f += 1) {
      const corner = this.faces[f].indexOf(vertexIndex);
      if (corner >= 0) {
        const bary: [number, number, number] = [0, 0, 0];
        bary[corner] = 1;
        return { face: this.parentFaces[f], bary, position: this.vertex(vertexIndex) };
      }
    }
    throw new Error(`vertex ${vertexIndex} not referenced by any head face`);
  }
}

export function toSurfacePointJson(hit: SurfaceHit): SurfacePointJson {
  return { face: hit.face, bary: [hit.bary[1], hit.bary[2]] };
}
