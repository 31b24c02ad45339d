/** Typed client for the gene-lab service. Every pixel and count the UI
 * shows comes from these responses; the client performs no numeric work. */

export interface GalleryImage {
  id: string;
  png: string; // base64 PNG
}

export interface ServiceInfo {
  count: number;
  mode: string;
  encoding_dim: number;
  tau_stops: number[];
  images: GalleryImage[];
}

export interface EncodeResponse {
  image_id: string;
  letters: string;
  d: number;
  probs_summary: {
    mean_confidence: number;
    category_counts: Record<string, number>;
  };
}

export interface GrowResponse {
  frames: string[];
  final: string;
  steps: number;
}

export interface MeanResponse {
  asserted: number;
  total: number;
  pattern: string;
  tau: number;
  frames: string[];
  final: string;
}

export interface SpliceResponse {
  dna: string;
  asserted: number;
  tau: number;
  frames: string[];
  final: string;
}

export interface MutateResponse {
  dna: string;
  rate: number;
  seed: number;
  frames: string[];
  final: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

async function decode<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({ error: resp.statusText }));
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? resp.statusText, body.field);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string) {}

  /** POST a pre-serialized body verbatim; recipe replay depends on sending
   * byte-identical requests. */
  async postRaw<T>(path: string, bodyJson: string): Promise<T> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: bodyJson,
    });
    return decode<T>(resp);
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.postRaw<T>(path, JSON.stringify(body));
  }

  async images(): Promise<ServiceInfo> {
    return decode<ServiceInfo>(await fetch(this.base + "/images"));
  }

  encode(imageId: string): Promise<EncodeResponse> {
    return this.post("/encode", { image_id: imageId });
  }

  grow(req: {
    dna?: string;
    image_id?: string;
    frames_every?: number;
    seed?: number;
  }): Promise<GrowResponse> {
    return this.post("/grow", req);
  }

  mean(req: {
    source_ids: string[];
    tau: number;
    frames_every?: number;
    seed?: number;
  }): Promise<MeanResponse> {
    return this.post("/mean", req);
  }

  splice(req: {
    source_ids: string[];
    tau: number;
    target_id: string;
    frames_every?: number;
    seed?: number;
  }): Promise<SpliceResponse> {
    return this.post("/splice", req);
  }

  mutate(req: {
    dna: string;
    rate: number;
    seed?: number;
    frames_every?: number;
  }): Promise<MutateResponse> {
    return this.post("/mutate", req);
  }
}
