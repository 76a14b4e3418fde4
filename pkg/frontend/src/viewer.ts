/** three.js scene for the hairline editor: target head, scalp overlay,
 * hairline segments, the draft curve, relocated guide roots, and the
 * density heatmap. Pointer input snaps to the head surface and feeds the
 * editor state; rendering never mutates server geometry. */
import {
  AmbientLight,
  BufferAttribute,
  BufferGeometry,
  Color,
  DirectionalLight,
  DoubleSide,
  Line,
  LineBasicMaterial,
  Mesh,
  MeshLambertMaterial,
  PerspectiveCamera,
  Points,
  PointsMaterial,
  Scene,
  Vector2,
  Vector3,
  WebGLRenderer,
} from "three";

import type { RelocationPayload, ScalpPayload } from "./api.js";
import type { EditorState } from "./editor-state.js";
import { densityHeatmap } from "./heatmap.js";
import { HeadSurface, type SurfaceHit } from "./raycast.js";

const CURVE_COLOR = 0xff5533;
const FRONT_COLOR = 0x2266ff;
const BACK_COLOR = 0x444444;
const GUIDE_COLOR = 0x22aa44;

export class EditorViewer {
  readonly scene = new Scene();
  readonly camera: PerspectiveCamera;
  readonly surface: HeadSurface;
  private readonly renderer: WebGLRenderer;
  private readonly scalpMesh: Mesh;
  private readonly scalp: ScalpPayload;
  private curveLine: Line | null = null;
  private guidePoints: Points | null = null;
  private dragIndex: number | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    scalp: ScalpPayload,
    private readonly state: EditorState,
    private readonly onCurveChange: () => void,
  ) {
    this.scalp = scalp;
    this.surface = new HeadSurface(scalp.head);
    this.renderer = new WebGLRenderer({ canvas, antialias: true });
    this.camera = new PerspectiveCamera(40, canvas.width / canvas.height, 0.001, 100);
    this.fitCamera();

    this.scene.background = new Color(0x10141a);
    this.scene.add(new AmbientLight(0xffffff, 0.6));
    const sun = new DirectionalLight(0xffffff, 1.0);
    sun.position.set(1, 2, 2);
    this.scene.add(sun);

    const headMat = this.surface.mesh.material as MeshLambertMaterial;
    this.surface.mesh.material = new MeshLambertMaterial({ color: 0x8a7f72 });
    headMat.dispose?.();
    this.scene.add(this.surface.mesh);

    this.scalpMesh = this.buildScalpMesh();
    this.scene.add(this.scalpMesh);
    this.scene.add(this.buildBoundaryLine(scalp.frontSegment, FRONT_COLOR));
    this.scene.add(this.buildBoundaryLine(scalp.backSegment, BACK_COLOR));

    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", () => (this.dragIndex = null));
  }

  private fitCamera(): void {
    const verts = this.scalp.head.vertices;
    const center = new Vector3();
    for (const v of verts) {
      center.add(new Vector3(v[0], v[1], v[2]));
    }
    center.divideScalar(verts.length);
    let radius = 0;
    for (const v of verts) {
      radius = Math.max(radius, center.distanceTo(new Vector3(v[0], v[1], v[2])));
    }
    this.camera.position.copy(center.clone().add(new Vector3(0, radius, 3.2 * radius)));
    this.camera.lookAt(center);
  }

  private buildScalpMesh(): Mesh {
    // non-indexed so per-face heatmap colors stay flat
    const faces = this.scalp.faces;
    const verts = this.scalp.vertices;
    const positions = new Float32Array(faces.length * 9);
    faces.forEach((f, i) => {
      f.forEach((v, corner) => {
        positions.set(verts[v], 9 * i + 3 * corner);
      });
    });
    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(positions, 3));
    geometry.computeVertexNormals();
    const material = new MeshLambertMaterial({
      vertexColors: true,
      side: DoubleSide,
      transparent: true,
      opacity: 0.92,
    });
    geometry.setAttribute(
      "color",
      new BufferAttribute(densityHeatmap(new Array(faces.length).fill(0)).faceColors, 3),
    );
    return new Mesh(geometry, material);
  }

  private buildBoundaryLine(segment: number[], color: number): Line {
    const pts = new Float32Array(segment.length * 3);
    segment.forEach((v, i) => pts.set(this.scalp.vertices[v], 3 * i));
    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(pts, 3));
    return new Line(geometry, new LineBasicMaterial({ color }));
  }

  private ndc(event: PointerEvent): Vector2 {
    const rect = this.canvas.getBoundingClientRect();
    return new Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
  }

  private nearestControlPoint(hit: SurfaceHit): number | null {
    let best: number | null = null;
    let bestDist = 0.02 * this.camera.position.length();
    this.state.curve.forEach((p, i) => {
      const d = hit.position.distanceTo(new Vector3(...p.position));
      if (d < bestDist) {
        best = i;
        bestDist = d;
      }
    });
    return best;
  }

  private onPointerDown(event: PointerEvent): void {
    const hit = this.surface.pick(this.ndc(event), this.camera);
    if (!hit) {
      this.canvas.style.cursor = "not-allowed";
      setTimeout(() => (this.canvas.style.cursor = "crosshair"), 250);
      return; // raycast miss: ignored with a visual hint
    }
    const near = this.nearestControlPoint(hit);
    if (near !== null && event.shiftKey) {
      this.dragIndex = near;
      return;
    }
    this.state.appendPoint(hit);
    this.refreshCurve();
    this.onCurveChange();
  }

  private onPointerMove(event: PointerEvent): void {
    if (this.dragIndex === null) {
      return;
    }
    const hit = this.surface.pick(this.ndc(event), this.camera);
    if (!hit) {
      return;
    }
    this.state.movePoint(this.dragIndex, hit);
    this.refreshCurve();
    this.onCurveChange();
  }

  refreshCurve(): void {
    if (this.curveLine) {
      this.scene.remove(this.curveLine);
    }
    if (this.state.curve.length < 2) {
      this.curveLine = null;
      return;
    }
    const pts = new Float32Array(this.state.curve.length * 3);
    this.state.curve.forEach((p, i) => pts.set(p.position, 3 * i));
    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(pts, 3));
    this.curveLine = new Line(
      geometry,
      new LineBasicMaterial({ color: CURVE_COLOR, linewidth: 2 }),
    );
    this.scene.add(this.curveLine);
  }

  /** Paint the relocation preview: heatmap + relocated guide roots. */
  showRelocation(payload: RelocationPayload): void {
    const values = payload.densityChange.distortion ?? payload.densityChange.redistribution;
    const colors = densityHeatmap(values);
    this.scalpMesh.geometry.setAttribute(
      "color",
      new BufferAttribute(colors.faceColors, 3),
    );
    if (this.guidePoints) {
      this.scene.remove(this.guidePoints);
    }
    const roots = payload.previewGuides.roots;
    const pts = new Float32Array(roots.flat());
    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(pts, 3));
    this.guidePoints = new Points(
      geometry,
      new PointsMaterial({ color: GUIDE_COLOR, size: 0.004 }),
    );
    this.scene.add(this.guidePoints);
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
