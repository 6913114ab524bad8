import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { NextResponse, VoteAck } from '../src/types.js';

const root = dirname(dirname(fileURLToPath(import.meta.url)));

/** Load the real page markup into the jsdom document. */
export function mountDom(): Document {
  const html = readFileSync(join(root, 'index.html'), 'utf-8');
  const body = html.match(/<body>([\s\S]*)<\/body>/);
  if (!body) throw new Error('index.html has no body');
  document.body.innerHTML = body[1];
  window.location.hash = '';
  return document;
}

export function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export interface FakeServerState {
  trials: NextResponse[];
  votes: Array<{ url: string; body: string }>;
  nextCalls: string[];
  voteStatus: number;
}

/**
 * Stub fetch backed by a fixed trial list: plain `next` serves trials[cursor],
 * `next?after=` peeks at cursor+1, and each accepted vote advances the cursor.
 */
export function fakeServer(trials: NextResponse[], voteStatus = 200): {
  state: FakeServerState;
  fetchFn: (input: string, init?: RequestInit) => Promise<Response>;
} {
  const state: FakeServerState = { trials, votes: [], nextCalls: [], voteStatus };
  let cursor = 0;

  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    if (input.includes('/vote')) {
      state.votes.push({ url: input, body: String(init?.body ?? '') });
      if (state.voteStatus === 200) {
        cursor += 1;
        const ack: VoteAck = { recorded: true, done: cursor, total: trials.length };
        return jsonResponse(200, ack);
      }
      return jsonResponse(state.voteStatus, { error: 'stubbed rejection' });
    }
    if (input.includes('/next')) {
      state.nextCalls.push(input);
      const index = input.includes('after=') ? cursor + 1 : cursor;
      if (index >= trials.length) {
        return jsonResponse(200, { complete: true, done: trials.length, total: trials.length });
      }
      return jsonResponse(200, trials[index]);
    }
    return jsonResponse(404, { error: `unexpected ${input}` });
  };

  return { state, fetchFn };
}

export function makeTrials(count: number, total = count): NextResponse[] {
  return Array.from({ length: count }, (_, i) => ({
    trial_id: `t${String(i).padStart(5, '0')}`,
    left: `/images/${'a'.repeat(15)}${i}`,
    right: `/images/${'b'.repeat(15)}${i}`,
    done: i,
    total,
  }));
}

export async function flushTasks(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
  await new Promise((resolve) => setTimeout(resolve, 0));
}
