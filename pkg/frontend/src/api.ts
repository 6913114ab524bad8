import { NextResponse, Side, VoteAck } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Typed client for the study service; every mutation flows through here. */
export class StudyApi {
  constructor(
    private readonly base = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  url(path: string): string {
    return this.base + path;
  }

  async next(subject: string, after?: string): Promise<NextResponse> {
    const suffix = after ? `?after=${encodeURIComponent(after)}` : '';
    const resp = await this.fetchFn(
      this.url(`/api/session/${encodeURIComponent(subject)}/next${suffix}`),
    );
    if (!resp.ok) {
      throw new ApiError(resp.status, await describe(resp));
    }
    return (await resp.json()) as NextResponse;
  }

  /** Resolves for 2xx and 409 (the caller advances either way); throws otherwise. */
  async vote(
    subject: string,
    trialId: string,
    position: Side,
  ): Promise<{ status: number; ack: VoteAck | null }> {
    const resp = await this.fetchFn(
      this.url(`/api/session/${encodeURIComponent(subject)}/vote`),
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ trial_id: trialId, position }),
      },
    );
    if (resp.ok) {
      return { status: resp.status, ack: (await resp.json()) as VoteAck };
    }
    if (resp.status === 409) {
      return { status: 409, ack: null };
    }
    throw new ApiError(resp.status, await describe(resp));
  }
}

async function describe(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    return body.error ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
