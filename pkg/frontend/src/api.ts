/** Typed client for the retargeting service. The editor never recomputes
 * physics: every number it renders comes from one of these payloads. */

export interface SessionPaths {
  sourceHair: string;
  sourceMesh: string;
  sourceSkeleton: string;
  targetMesh: string;
  targetSkeleton: string;
  config?: string;
  earMarkers?: [number, number];
}

export interface HeadPayload {
  vertices: number[][];
  faces: number[][];
  parentFaces: number[];
}

export interface ScalpPayload {
  vertices: number[][];
  faces: number[][];
  hairlineLoop: number[];
  frontSegment: number[];
  backSegment: number[];
  turningPoints: number[];
  earMarkers: [number, number];
  head: HeadPayload;
}

export interface RelocatedRoot {
  root: number;
  face: number;
  bary: number[];
  position: number[];
}

export interface DensityChangePayload {
  redistribution: number[];
  distortion?: number[];
  countsBefore: number[];
  countsAfter: number[];
  l1Mean: number;
  l1Sum: number;
  linf: number;
  redistributionL1Mean: number;
  redistributionLinf: number;
}

export interface RelocationPayload {
  relocatedRoots: RelocatedRoot[];
  travelDistances: number[];
  densityChange: DensityChangePayload;
  previewGuides: { strands: number[]; roots: number[][] };
}

export interface JobPayload {
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  error?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = "http_error";
    let message = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: { code?: string; message?: string } };
      code = body.detail?.code ?? code;
      message = body.detail?.message ?? message;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, code, message);
  }
  return (await resp.json()) as T;
}

export class HairAdaptClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  async createSession(paths: SessionPaths): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(paths),
    });
    const doc = await expectJson<{ id: string }>(resp);
    return doc.id;
  }

  async getScalp(sessionId: string): Promise<ScalpPayload> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/scalp`);
    return expectJson<ScalpPayload>(resp);
  }

  async postHairline(sessionId: string, editJson: string): Promise<RelocationPayload> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/hairline`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: editJson,
    });
    return expectJson<RelocationPayload>(resp);
  }

  async startRetarget(sessionId: string, useEdit: boolean): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/retarget`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ useEdit }),
    });
    const doc = await expectJson<{ jobId: string }>(resp);
    return doc.jobId;
  }

  async getJob(jobId: string): Promise<JobPayload> {
    const resp = await this.fetchImpl(`${this.baseUrl}/jobs/${jobId}`);
    return expectJson<JobPayload>(resp);
  }

  async pollJob(
    jobId: string,
    onProgress?: (p: JobPayload) => void,
    intervalMs = 150,
  ): Promise<JobPayload> {
    for (;;) {
      const job = await this.getJob(jobId);
      onProgress?.(job);
      if (job.status === "done" || job.status === "failed") {
        return job;
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  async downloadResult(sessionId: string): Promise<ArrayBuffer> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/result`);
    if (!resp.ok) {
      throw new ApiError(resp.status, "no_result", resp.statusText);
    }
    return resp.arrayBuffer();
  }
}
