// Typed client for the assignment service. The UI never computes
// assignment numbers itself; everything rendered comes from these responses.

export interface Prediction {
  z: number[];
  zbar: number[] | null;
  gamma: number | null;
  mode: 'projected' | 'lambda0_closed_form' | 'crowd_only';
  tie: boolean;
  warning: string | null;
  cache_hit: boolean;
}

export interface ModelMeta {
  n: number;
  k: number;
  lambda: number;
  [key: string]: unknown;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = JSON.stringify(body.detail);
      } catch {
        // keep statusText
      }
      throw new ApiError(resp.status, detail);
    }
    return resp.json() as Promise<T>;
  }

  modelMeta(modelId: string): Promise<ModelMeta> {
    return this.request<ModelMeta>(`/models/${encodeURIComponent(modelId)}`);
  }

  predict(modelId: string, w: number[], g: number[], lambda: number): Promise<Prediction> {
    return this.request<Prediction>(`/models/${encodeURIComponent(modelId)}/predict`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ w, g, lambda }),
    });
  }

  lambdaPath(
    modelId: string,
    w: number[],
    g: number[],
    lambdas: number[],
  ): Promise<Prediction[]> {
    return this.request<{ predictions: Prediction[] }>(
      `/models/${encodeURIComponent(modelId)}/path`,
      {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ w, g, lambdas }),
      },
    ).then((body) => body.predictions);
  }
}
