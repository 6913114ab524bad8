// Scripted rater session against the real study service: six trials,
// keyboard submission, a mid-study reload, and an injected duplicate vote.
import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it, vi } from 'vitest';

import { RaterApp } from '../src/app.js';
import { StudyApi } from '../src/api.js';
import { mountDom } from './helpers.js';

const here = dirname(fileURLToPath(import.meta.url));
const TOTAL = 6;

let scratch: string;
let studyDir: string;
let server: ChildProcess;
let base: string;

function startServer(): Promise<string> {
  server = spawn('python3', ['-m', 'madstudy', 'serve', studyDir, '--port', '0'], {
    stdio: ['ignore', 'pipe', 'inherit'],
  });
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error('server never announced itself')), 20_000);
    let buffer = '';
    server.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/http:\/\/([\d.]+):(\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(`http://${match[1]}:${match[2]}`);
      }
    });
    server.on('exit', (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early with code ${code}`));
    });
  });
}

function newTab(): RaterApp {
  const doc = mountDom();
  const app = new RaterApp(doc, new StudyApi(base));
  app.attach();
  return app;
}

async function settle(app: RaterApp, expectedTrial: number): Promise<void> {
  await vi.waitFor(() => {
    expect(app.current?.done).toBe(expectedTrial - 1);
  });
}

beforeAll(async () => {
  scratch = mkdtempSync(join(tmpdir(), 'madstudy-ui-'));
  studyDir = execFileSync(
    'python3',
    [join(here, 'support', 'make_study.py'), scratch, '--trials', String(TOTAL)],
    { encoding: 'utf-8' },
  ).trim();
  base = await startServer();
});

afterAll(() => {
  server?.kill('SIGKILL');
  rmSync(scratch, { recursive: true, force: true });
});

describe('rater UI against the live service', () => {
  it('completes a six-trial study with reload and duplicate handling', async () => {
    // trial 1: unlabeled pair rendered
    let app = newTab();
    await app.start('uitester');
    await settle(app, 1);
    const docHtml = () => document.documentElement.outerHTML;
    expect(document.getElementById('rating-section')!.hasAttribute('hidden')).toBe(false);
    const leftSrc = (document.getElementById('left-img') as HTMLImageElement).src;
    const rightSrc = (document.getElementById('right-img') as HTMLImageElement).src;
    expect(leftSrc).toContain('/images/');
    expect(rightSrc).toContain('/images/');
    expect(leftSrc).not.toBe(rightSrc);
    for (const secret of ['alphaenh', 'betaenh', 'cand0', 'cand1']) {
      expect(docHtml()).not.toContain(secret);
    }
    expect(document.getElementById('progress-text')!.textContent).toBe(`1 / ${TOTAL}`);

    // trials 1 and 2 submitted via keyboard only
    for (const [step, key] of [[1, 'ArrowLeft'], [2, 'ArrowRight']] as const) {
      await settle(app, step);
      document.dispatchEvent(new KeyboardEvent('keydown', { key }));
      const pane = key === 'ArrowLeft' ? 'left-pane' : 'right-pane';
      expect(document.getElementById(pane)!.classList.contains('selected')).toBe(true);
      document.dispatchEvent(new KeyboardEvent('keydown', { key: 'Enter' }));
      await settle(app, step + 1);
    }
    expect(document.getElementById('progress-text')!.textContent).toBe(`3 / ${TOTAL}`);

    // reload the tab at trial 3: server-side state resumes at trial 3
    const trialBeforeReload = app.current!.trial_id;
    app = newTab();
    await app.start('uitester');
    await settle(app, 3);
    expect(app.current!.trial_id).toBe(trialBeforeReload);
    expect(document.getElementById('progress-text')!.textContent).toBe(`3 / ${TOTAL}`);

    // vote trial 3, then inject a duplicate for it: 409 comes back and the
    // app advances to trial 4 instead of erroring
    const duplicated = app.current!.trial_id;
    app.select('left');
    await app.confirm();
    await settle(app, 4);
    await app.submitVote(duplicated, 'left');
    await settle(app, 4);
    expect(app.phase).toBe('rating');

    // finish the remaining trials by pane click + confirm click
    while (app.phase === 'rating') {
      const before = app.current!.done;
      (document.getElementById('left-pane') as HTMLElement).click();
      (document.getElementById('confirm-btn') as HTMLButtonElement).click();
      await vi.waitFor(() => {
        expect(app.phase === 'complete' || app.current!.done === before + 1).toBe(true);
      });
    }
    expect(app.phase).toBe('complete');
    expect(document.getElementById('complete-text')!.textContent).toContain(
      `${TOTAL} of ${TOTAL}`,
    );

    // the server agrees: subject finished all six
    const progress = await (await fetch(`${base}/api/progress`)).json();
    const entry = progress.subjects.find(
      (s: { subject_id: string }) => s.subject_id === 'uitester',
    );
    expect(entry).toMatchObject({ done: TOTAL, total: TOTAL });
  });
});
