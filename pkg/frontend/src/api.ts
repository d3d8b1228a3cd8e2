// Thin client over the service endpoints. The fetch function is injected so
// tests can stub the service without a network.

import type { Ack, Batch, ResponseItem } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class BannedError extends Error {
  constructor() {
    super('worker is banned');
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async fetchBatch(workerId: string): Promise<Batch> {
    const res = await this.fetchImpl(
      `${this.baseUrl}/api/batch?worker_id=${encodeURIComponent(workerId)}`,
    );
    if (res.status === 403) {
      throw new BannedError();
    }
    if (!res.ok) {
      throw new Error(`batch request failed: HTTP ${res.status}`);
    }
    return (await res.json()) as Batch;
  }

  async submitResponses(workerId: string, responses: ResponseItem[]): Promise<Ack[]> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/responses`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ worker_id: workerId, responses }),
    });
    if (!res.ok) {
      throw new Error(`submit failed: HTTP ${res.status}`);
    }
    return (await res.json()) as Ack[];
  }
}
