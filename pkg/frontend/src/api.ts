/** Typed client for the design-service HTTP API. */

export interface Ranges {
  params: Record<string, [number, number]>;
  n_h_values: number[];
  labels: Record<string, [number, number]>;
}

export interface ModelInfo {
  tool_version: string;
  flow: { n_blocks: number; width: number; alpha: number; dim: number; label_dim: number };
  loss_weights: number[];
  surrogate_test_mae: number[];
  label_ranges: number[];
  baseline_available: boolean;
}

export interface TargetLabels {
  U_M: number;
  dp_rel: number;
  G: number;
}

export interface GeneratedDesign {
  params: Record<string, number>;
  valid: boolean;
  predicted_labels: TargetLabels | null;
  distance: number | null;
}

export interface GenerateResponse {
  designs: GeneratedDesign[];
  yield: number;
  count: number;
  seed: number;
}

export interface ValidatedLabels {
  U_M: number;
  dp_rel: number;
  G: number;
  g_clipped: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const message = typeof body === "object" && body && "error" in body
      ? String((body as { error: unknown }).error)
      : `HTTP ${response.status}`;
    throw new ApiError(response.status, message);
  }
  return body as T;
}

export class DesignApi {
  constructor(private readonly baseUrl: string) {}

  ranges(): Promise<Ranges> {
    return request<Ranges>(`${this.baseUrl}/ranges`);
  }

  modelInfo(): Promise<ModelInfo> {
    return request<ModelInfo>(`${this.baseUrl}/model/info`);
  }

  generate(targets: TargetLabels, count: number, seed = 0): Promise<GenerateResponse> {
    return request<GenerateResponse>(`${this.baseUrl}/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ targets, count, seed }),
    });
  }

  validate(designs: Record<string, number>[]): Promise<{ labels: ValidatedLabels[] }> {
    return request<{ labels: ValidatedLabels[] }>(`${this.baseUrl}/validate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ designs }),
    });
  }
}
