/** Application bootstrap: session form, editor canvas, preview and commit
 * controls. One in-flight preview at a time; the latest request wins. */
import { HairAdaptClient, type RelocationPayload } from "./api.js";
import { EditorState } from "./editor-state.js";
import { parseEdit } from "./schema.js";
import { EditorViewer } from "./viewer.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function boot(): Promise<void> {
  const client = new HairAdaptClient(
    (document.body.dataset.apiBase ?? "").replace(/\/$/, ""),
  );
  const status = el<HTMLDivElement>("status");
  const canvas = el<HTMLCanvasElement>("editor");

  el<HTMLButtonElement>("connect").addEventListener("click", async () => {
    status.textContent = "creating session...";
    try {
      const sessionId = await client.createSession({
        sourceHair: el<HTMLInputElement>("sourceHair").value,
        sourceMesh: el<HTMLInputElement>("sourceMesh").value,
        sourceSkeleton: el<HTMLInputElement>("sourceSkeleton").value,
        targetMesh: el<HTMLInputElement>("targetMesh").value,
        targetSkeleton: el<HTMLInputElement>("targetSkeleton").value,
      });
      await openEditor(client, sessionId, canvas, status);
    } catch (err) {
      status.textContent = `session failed: ${(err as Error).message}`;
    }
  });
}

async function openEditor(
  client: HairAdaptClient,
  sessionId: string,
  canvas: HTMLCanvasElement,
  status: HTMLDivElement,
): Promise<void> {
  status.textContent = "loading scalp...";
  const scalp = await client.getScalp(sessionId);
  const state = new EditorState(sessionId, scalp.earMarkers);

  let previewSeq = 0;
  let lastPreview: RelocationPayload | null = null;
  const requestPreview = async () => {
    if (!state.canExport()) {
      return;
    }
    const seq = (previewSeq += 1);
    try {
      const payload = await client.postHairline(sessionId, state.serialize());
      if (seq !== previewSeq) {
        return; // a newer request superseded this one
      }
      lastPreview = payload;
      viewer.showRelocation(payload);
      status.textContent =
        `relocation: mean travel ` +
        `${mean(payload.travelDistances).toExponential(3)} m, ` +
        `density Linf ${payload.densityChange.linf.toExponential(3)}`;
    } catch (err) {
      status.textContent = `preview rejected: ${(err as Error).message}`;
    }
  };

  const viewer = new EditorViewer(canvas, scalp, state, () => {
    void requestPreview();
  });
  const loop = () => {
    viewer.render();
    requestAnimationFrame(loop);
  };
  loop();

  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    if (state.undo()) {
      viewer.refreshCurve();
      void requestPreview();
    }
  });
  el<HTMLButtonElement>("redo").addEventListener("click", () => {
    if (state.redo()) {
      viewer.refreshCurve();
      void requestPreview();
    }
  });
  el<HTMLButtonElement>("export").addEventListener("click", () => {
    const text = state.serialize();
    parseEdit(text); // schema round trip before offering the download
    download("hairline-edit.json", new Blob([text], { type: "application/json" }));
  });
  el<HTMLButtonElement>("commit").addEventListener("click", async () => {
    status.textContent = "retargeting...";
    const jobId = await client.startRetarget(sessionId, lastPreview !== null);
    const job = await client.pollJob(jobId, (p) => {
      status.textContent = `retargeting: ${(p.progress * 100).toFixed(0)}%`;
    });
    if (job.status === "failed") {
      status.textContent = `retarget failed: ${job.error}`;
      return;
    }
    const bytes = await client.downloadResult(sessionId);
    download("retargeted.hair", new Blob([bytes], { type: "application/octet-stream" }));
    status.textContent = "done; result downloaded";
  });
}

function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / Math.max(1, values.length);
}

function download(name: string, blob: Blob): void {
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = name;
  a.click();
  URL.revokeObjectURL(url);
}

void boot();
