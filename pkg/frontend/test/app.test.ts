import { beforeEach, describe, expect, it, vi } from 'vitest';

import { RaterApp } from '../src/app.js';
import { StudyApi } from '../src/api.js';
import { TrialView } from '../src/types.js';
import { fakeServer, flushTasks, jsonResponse, makeTrials, mountDom } from './helpers.js';

function mountApp(trials = makeTrials(3), voteStatus = 200) {
  const doc = mountDom();
  const { state, fetchFn } = fakeServer(trials, voteStatus);
  const app = new RaterApp(doc, new StudyApi('', fetchFn));
  app.attach();
  return { app, doc, state };
}

function key(doc: Document, name: string) {
  doc.dispatchEvent(new KeyboardEvent('keydown', { key: name }));
}

describe('RaterApp', () => {
  beforeEach(() => {
    window.location.hash = '';
  });

  it('starts on the landing screen and renders trial 1 after start', async () => {
    const { app, doc } = mountApp();
    expect(doc.getElementById('landing-section')!.hasAttribute('hidden')).toBe(false);
    await app.start('tester');
    expect(app.phase).toBe('rating');
    expect((doc.getElementById('left-img') as HTMLImageElement).src).toContain('/images/');
    expect(doc.getElementById('progress-text')!.textContent).toBe('1 / 3');
  });

  it('keeps the server order: left URL goes to the left pane', async () => {
    const trials = makeTrials(1);
    const { app, doc } = mountApp(trials);
    await app.start('tester');
    const view = trials[0] as TrialView;
    expect((doc.getElementById('left-img') as HTMLImageElement).getAttribute('src')).toBe(view.left);
    expect((doc.getElementById('right-img') as HTMLImageElement).getAttribute('src')).toBe(view.right);
  });

  it('arrow keys select and Enter submits the matching position', async () => {
    const { app, doc, state } = mountApp();
    await app.start('tester');
    key(doc, 'ArrowRight');
    expect(doc.getElementById('right-pane')!.classList.contains('selected')).toBe(true);
    key(doc, 'Enter');
    await vi.waitFor(() => expect(state.votes.length).toBe(1));
    expect(JSON.parse(state.votes[0].body)).toEqual({ trial_id: 't00000', position: 'right' });
    await vi.waitFor(() => expect(app.current?.trial_id).toBe('t00001'));
  });

  it('requires a selection before confirm does anything', async () => {
    const { app, doc, state } = mountApp();
    await app.start('tester');
    expect((doc.getElementById('confirm-btn') as HTMLButtonElement).disabled).toBe(true);
    await app.confirm();
    expect(state.votes.length).toBe(0);
  });

  it('double confirmation sends exactly one POST', async () => {
    const trials = makeTrials(2);
    const doc = mountDom();
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const votes: string[] = [];
    let cursor = 0;
    const app = new RaterApp(
      doc,
      new StudyApi('', async (url, init) => {
        if (url.includes('/vote')) {
          votes.push(String(init?.body));
          await gate; // hold the first POST open while we spam confirm
          cursor += 1;
          return jsonResponse(200, { recorded: true, done: cursor, total: 2 });
        }
        const index = url.includes('after=') ? cursor + 1 : cursor;
        if (index >= trials.length) {
          return jsonResponse(200, { complete: true, done: 2, total: 2 });
        }
        return jsonResponse(200, trials[index]);
      }),
    );
    app.attach();
    await app.start('tester');
    app.select('left');
    const first = app.confirm();
    void app.confirm();
    void app.confirm();
    release();
    await first;
    await flushTasks();
    expect(votes.length).toBe(1);
  });

  it('advances past a 409 duplicate instead of erroring', async () => {
    const trials = makeTrials(2);
    const { app } = mountApp(trials, 409);
    await app.start('tester');
    app.select('left');
    await app.confirm();
    expect(app.phase).toBe('rating'); // no error screen
    expect(app.current?.trial_id).toBe('t00000'); // server still says trial 0 is next
  });

  it('shows the completion screen with the final tally', async () => {
    const { app, doc, state } = mountApp(makeTrials(2));
    await app.start('tester');
    for (const position of ['left', 'right'] as const) {
      app.select(position);
      await app.confirm();
    }
    expect(app.phase).toBe('complete');
    expect(doc.getElementById('complete-text')!.textContent).toContain('2 of 2');
    expect(state.votes.length).toBe(2);
  });

  it('sends an unknown subject back to the landing screen', async () => {
    const doc = mountDom();
    const app = new RaterApp(
      doc,
      new StudyApi('', async () => jsonResponse(404, { error: 'subject id rejected' })),
    );
    app.attach();
    await app.start('???');
    expect(app.phase).toBe('landing');
    expect(doc.getElementById('landing-message')!.textContent).toContain('rejected');
  });

  it('network failure offers retry without losing the pending vote', async () => {
    const trials = makeTrials(2);
    const doc = mountDom();
    let failNext = false;
    let cursor = 0;
    const votes: string[] = [];
    const app = new RaterApp(
      doc,
      new StudyApi('', async (url, init) => {
        if (failNext && url.includes('/vote')) {
          failNext = false;
          throw new TypeError('network down');
        }
        if (url.includes('/vote')) {
          votes.push(String(init?.body));
          cursor += 1;
          return jsonResponse(200, { recorded: true, done: cursor, total: 2 });
        }
        const index = url.includes('after=') ? cursor + 1 : cursor;
        if (index >= trials.length) {
          return jsonResponse(200, { complete: true, done: 2, total: 2 });
        }
        return jsonResponse(200, trials[index]);
      }),
    );
    app.attach();
    await app.start('tester');
    app.select('left');
    failNext = true;
    await app.confirm();
    expect(app.phase).toBe('error');
    await app.retry();
    await flushTasks();
    expect(votes.length).toBe(1);
    expect(JSON.parse(votes[0]).trial_id).toBe('t00000');
    expect(app.current?.trial_id).toBe('t00001');
  });

  it('preloads the upcoming trial images in the background', async () => {
    const { app, state } = mountApp(makeTrials(3));
    await app.start('tester');
    await flushTasks();
    expect(state.nextCalls.some((url) => url.includes('after=t00000'))).toBe(true);
    expect(app.preloadedImages.length).toBe(2);
    const upcoming = makeTrials(3)[1] as TrialView;
    expect(app.preloadedImages[0].getAttribute('src')).toBe(upcoming.left);
  });

  it('resumes from the subject id in the location hash', async () => {
    const doc = mountDom();
    window.location.hash = 's=returning';
    const { fetchFn } = fakeServer(makeTrials(2));
    const app = new RaterApp(doc, new StudyApi('', fetchFn));
    app.attach();
    await flushTasks();
    expect(app.subject).toBe('returning');
    expect(app.phase).toBe('rating');
  });
});
