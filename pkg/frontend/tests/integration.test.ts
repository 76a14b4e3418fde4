/** End-to-end identity-edit round trip against the real service.
 *
 * Requires the Python package to be installed (the server is spawned as a
 * child process); skipped unless HAIRADAPT_INTEGRATION=1.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { HairAdaptClient, type ScalpPayload } from "../src/api.js";
import { EditorState } from "../src/editor-state.js";
import { meanParticleDistance, parseHairFile } from "../src/hair-file.js";
import { HeadSurface } from "../src/raycast.js";
import { parseEdit, serializeEdit } from "../src/schema.js";

const enabled = process.env.HAIRADAPT_INTEGRATION === "1";
const suite = enabled ? describe : describe.skip;

let server: ChildProcess | null = null;
let baseUrl = "";

async function startServer(): Promise<string> {
  return new Promise((resolve, reject) => {
    const proc = spawn("python3", [new URL("./serve_fixture.py", import.meta.url).pathname], {
      stdio: ["ignore", "pipe", "inherit"],
    });
    server = proc;
    const timer = setTimeout(() => reject(new Error("server start timeout")), 60_000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      const match = /READY (\d+)/.exec(chunk.toString());
      if (match) {
        clearTimeout(timer);
        resolve(`http://127.0.0.1:${match[1]}`);
      }
    });
    proc.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
}

async function waitHealthy(url: string): Promise<void> {
  for (let i = 0; i < 200; i += 1) {
    try {
      const resp = await fetch(`${url}/healthz`);
      if (resp.ok) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("server never became healthy");
}

suite("identity edit round trip", () => {
  let client: HairAdaptClient;
  let sessionId: string;
  let scalp: ScalpPayload;

  beforeAll(async () => {
    baseUrl = await startServer();
    await waitHealthy(baseUrl);
    client = new HairAdaptClient(baseUrl);
    sessionId = await client.createSession({
      sourceHair: "style.hair",
      sourceMesh: "source.obj",
      sourceSkeleton: "source.skeleton.json",
      targetMesh: "target.obj",
      targetSkeleton: "target.skeleton.json",
    });
    scalp = await client.getScalp(sessionId);
  }, 120_000);

  afterAll(() => {
    server?.kill();
  });

  it("runs the full editor flow with an identity hairline", async () => {
    // unedited reference retarget first
    const baseJob = await client.startRetarget(sessionId, false);
    const baseDone = await client.pollJob(baseJob);
    expect(baseDone.status).toBe("done");
    const unedited = parseHairFile(await client.downloadResult(sessionId));

    // draw the identity hairline: snap every current front vertex, exactly
    const surface = new HeadSurface(scalp.head);
    const state = new EditorState(sessionId, scalp.earMarkers);
    const headIndexOfScalp = buildScalpToHeadVertexMap(scalp);
    for (const v of scalp.frontSegment) {
      const hit = surface.vertexSurfacePoint(headIndexOfScalp[v]);
      state.appendPoint(hit);
    }
    const editText = state.serialize();
    expect(serializeEdit(parseEdit(editText))).toBe(editText); // byte-exact

    const preview = await client.postHairline(sessionId, editText);
    const travel = preview.travelDistances;
    expect(Math.max(...travel)).toBeLessThan(1e-9);
    const heat = preview.densityChange.distortion!;
    expect(Math.max(...heat.map(Math.abs))).toBeLessThan(1e-9);
    expect(preview.previewGuides.roots.length).toBeGreaterThan(0);

    // committed result matches the unedited retarget within solver tolerance
    const editJob = await client.startRetarget(sessionId, true);
    const progress: number[] = [];
    const done = await client.pollJob(editJob, (p) => progress.push(p.progress));
    expect(done.status).toBe("done");
    expect(progress.every((p, i) => i === 0 || p >= progress[i - 1])).toBe(true);

    const bytes = await client.downloadResult(sessionId);
    const edited = parseHairFile(bytes);
    const dist = meanParticleDistance(unedited, edited);
    expect(dist).toBeLessThan(1e-4); // outer-loop tolerance at this scale

    // download byte-equals the server result file
    const again = await client.downloadResult(sessionId);
    expect(Buffer.from(bytes).equals(Buffer.from(again))).toBe(true);
  }, 300_000);
});

/** scalp vertex id -> head-patch vertex id via exact coordinate match */
function buildScalpToHeadVertexMap(payload: ScalpPayload): number[] {
  const headIndex = new Map<string, number>();
  payload.head.vertices.forEach((v, i) => headIndex.set(v.join(","), i));
  return payload.vertices.map((v) => {
    const match = headIndex.get(v.join(","));
    if (match === undefined) {
      throw new Error("scalp vertex missing from head patch");
    }
    return match;
  });
}
