import type { JoinResponse, LoginResponse } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`gateway ${status}: ${detail}`);
  }
}

/**
 * Thin typed client over the REST endpoints in docs/api.md. Errors carry
 * the server's status and detail so the UI can surface them as notices,
 * never silent failures.
 */
export class GatewayClient {
  token = '';

  constructor(
    readonly baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async login(email: string, password: string): Promise<LoginResponse> {
    const out = await this.request<LoginResponse>('POST', '/api/auth/login', { email, password });
    this.token = out.token;
    return out;
  }

  join(experimentId: string): Promise<JoinResponse> {
    return this.request('POST', `/api/experiments/${experimentId}/join`);
  }

  content(instanceId: string): Promise<unknown[]> {
    return this.request('GET', `/api/instances/${instanceId}/content`);
  }

  submit(
    instanceId: string,
    body: { kind: string; body: string; parent_id?: string | null; flair?: string | null },
  ): Promise<unknown> {
    return this.request('POST', `/api/instances/${instanceId}/content`, body);
  }

  react(instanceId: string, itemId: string, reaction: string): Promise<unknown> {
    return this.request('POST', `/api/instances/${instanceId}/reactions`, {
      item_id: itemId,
      reaction,
    });
  }

  manualTrigger(instanceId: string, agentId: string, promptText: string): Promise<unknown> {
    return this.request('POST', `/api/instances/${instanceId}/manual-trigger`, {
      agent_id: agentId,
      prompt_text: promptText,
    });
  }

  stop(instanceId: string): Promise<unknown> {
    return this.request('POST', `/api/instances/${instanceId}/stop`);
  }

  monitor(): Promise<unknown[]> {
    return this.request('GET', '/api/instances');
  }

  exportUrl(instanceId: string, format: 'json' | 'csv'): string {
    return `${this.baseUrl}/api/instances/${instanceId}/export?format=${format}`;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        'content-type': 'application/json',
        ...(this.token ? { authorization: `Bearer ${this.token}` } : {}),
      },
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const text = await response.text();
    const data = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new GatewayError(response.status, data?.detail ?? response.statusText);
    }
    return data as T;
  }
}
