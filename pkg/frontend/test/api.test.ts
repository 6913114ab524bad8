import { describe, expect, it } from 'vitest';

import { ApiError, StudyApi } from '../src/api.js';
import { jsonResponse } from './helpers.js';

describe('StudyApi', () => {
  it('fetches the next trial for a subject', async () => {
    const calls: string[] = [];
    const api = new StudyApi('http://x', async (url) => {
      calls.push(url);
      return jsonResponse(200, { trial_id: 't1', left: '/l', right: '/r', done: 0, total: 6 });
    });
    const next = await api.next('al ice'.replace(' ', ''));
    expect(calls).toEqual(['http://x/api/session/alice/next']);
    expect(next).toMatchObject({ trial_id: 't1' });
  });

  it('passes the peek parameter through', async () => {
    const calls: string[] = [];
    const api = new StudyApi('', async (url) => {
      calls.push(url);
      return jsonResponse(200, { complete: true, done: 6, total: 6 });
    });
    await api.next('s', 't00003');
    expect(calls[0]).toBe('/api/session/s/next?after=t00003');
  });

  it('posts votes with trial id and position only', async () => {
    let captured: { url: string; body: string } | null = null;
    const api = new StudyApi('', async (url, init) => {
      captured = { url, body: String(init?.body) };
      return jsonResponse(200, { recorded: true, done: 1, total: 6 });
    });
    const result = await api.vote('s', 't1', 'right');
    expect(result.status).toBe(200);
    expect(captured!.url).toBe('/api/session/s/vote');
    expect(JSON.parse(captured!.body)).toEqual({ trial_id: 't1', position: 'right' });
  });

  it('resolves a 409 instead of throwing', async () => {
    const api = new StudyApi('', async () => jsonResponse(409, { error: 'dup' }));
    const result = await api.vote('s', 't1', 'left');
    expect(result).toEqual({ status: 409, ack: null });
  });

  it('throws ApiError with the status for other failures', async () => {
    const api = new StudyApi('', async () => jsonResponse(404, { error: 'nope' }));
    await expect(api.next('s')).rejects.toThrowError(ApiError);
    await expect(api.next('s')).rejects.toMatchObject({ status: 404 });
  });
});
