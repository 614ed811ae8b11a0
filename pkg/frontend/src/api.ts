import type { HealthResponse, QueryResponse } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export async function postQuery(query: string, baseUrl = ""): Promise<QueryResponse> {
  const response = await fetch(`${baseUrl}/api/query`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ query }),
  });
  if (!response.ok) {
    throw new ApiError(response.status, `query failed with status ${response.status}`);
  }
  return (await response.json()) as QueryResponse;
}

export async function getHealth(baseUrl = ""): Promise<HealthResponse> {
  const response = await fetch(`${baseUrl}/api/health`);
  if (!response.ok) {
    throw new ApiError(response.status, `health check failed with status ${response.status}`);
  }
  return (await response.json()) as HealthResponse;
}
