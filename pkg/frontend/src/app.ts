import { ApiError, StudyApi } from './api.js';
import { SyncedViewer } from './viewer.js';
import { isComplete, Side, TrialView } from './types.js';

type Phase = 'landing' | 'rating' | 'complete' | 'error';

/**
 * The rater session. All progress lives server-side: this class only holds
 * the trial currently on screen, so a reload lands exactly where the server
 * says the subject left off.
 */
export class RaterApp {
  phase: Phase = 'landing';
  subject = '';
  current: TrialView | null = null;
  selected: Side | null = null;

  /** Images for the upcoming trial, held so the browser keeps them warm. */
  preloadedImages: HTMLImageElement[] = [];

  private voteInFlight = false;
  private retryAction: (() => Promise<void>) | null = null;
  readonly viewer: SyncedViewer;

  constructor(
    private readonly doc: Document,
    private readonly api: StudyApi,
  ) {
    this.viewer = new SyncedViewer(
      [this.el('left-pane'), this.el('right-pane')],
      [this.img('left-img'), this.img('right-img')],
    );
  }

  // wiring -----------------------------------------------------------------

  attach(): void {
    this.viewer.attach();
    this.el('start-btn').addEventListener('click', () => {
      void this.start(this.input('subject-input').value.trim());
    });
    this.input('subject-input').addEventListener('keydown', (ev) => {
      if ((ev as KeyboardEvent).key === 'Enter') {
        void this.start(this.input('subject-input').value.trim());
      }
    });
    this.el('left-pane').addEventListener('click', () => this.select('left'));
    this.el('right-pane').addEventListener('click', () => this.select('right'));
    this.el('confirm-btn').addEventListener('click', () => {
      void this.confirm();
    });
    this.el('retry-btn').addEventListener('click', () => {
      void this.retry();
    });
    this.doc.addEventListener('keydown', (ev) => this.onKey(ev as KeyboardEvent));

    const fromHash = this.doc.defaultView?.location.hash.match(/^#s=(.+)$/);
    if (fromHash) {
      void this.start(decodeURIComponent(fromHash[1]));
    } else {
      this.show('landing');
    }
  }

  onKey(ev: KeyboardEvent): void {
    if (this.phase !== 'rating') return;
    if (ev.key === 'ArrowLeft') {
      this.select('left');
    } else if (ev.key === 'ArrowRight') {
      this.select('right');
    } else if (ev.key === 'Enter') {
      void this.confirm();
    }
  }

  // session ----------------------------------------------------------------

  async start(subject: string): Promise<void> {
    if (!subject) {
      this.setText('landing-message', 'Enter a subject identifier to begin.');
      return;
    }
    this.subject = subject;
    const win = this.doc.defaultView;
    if (win) {
      win.location.hash = `s=${encodeURIComponent(subject)}`;
    }
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    await this.guarded(async () => {
      const next = await this.api.next(this.subject);
      if (isComplete(next)) {
        this.current = null;
        this.setText('complete-text', `All done: ${next.done} of ${next.total} comparisons.`);
        this.show('complete');
        return;
      }
      this.renderTrial(next);
    });
  }

  renderTrial(view: TrialView): void {
    this.current = view;
    this.selected = null;
    this.voteInFlight = false;
    this.img('left-img').src = this.api.url(view.left);
    this.img('right-img').src = this.api.url(view.right);
    this.viewer.reset();
    this.updateSelectionUi();
    this.setText('progress-text', `${view.done + 1} / ${view.total}`);
    this.show('rating');
    this.preloadUpcoming(view.trial_id);
  }

  /** Fetch the following trial and warm its images while the rater deliberates. */
  preloadUpcoming(afterTrialId: string): void {
    void this.api
      .next(this.subject, afterTrialId)
      .then((upcoming) => {
        if (isComplete(upcoming)) return;
        this.preloadedImages = [upcoming.left, upcoming.right].map((url) => {
          const img = this.doc.createElement('img');
          img.src = this.api.url(url);
          return img;
        });
      })
      .catch(() => {
        this.preloadedImages = []; // preloading is best effort only
      });
  }

  select(side: Side): void {
    if (this.phase !== 'rating' || this.voteInFlight) return;
    this.selected = side;
    this.updateSelectionUi();
  }

  async confirm(): Promise<void> {
    if (this.phase !== 'rating' || !this.current || !this.selected) return;
    if (this.voteInFlight) return; // double clicks must not double-POST
    await this.submitVote(this.current.trial_id, this.selected);
  }

  /** POST one vote; a 409 means the server already has it, so advance. */
  async submitVote(trialId: string, position: Side): Promise<void> {
    this.voteInFlight = true;
    this.updateSelectionUi();
    try {
      await this.api.vote(this.subject, trialId, position);
    } catch (err) {
      this.voteInFlight = false;
      this.fail(err, () => this.submitVote(trialId, position));
      return;
    }
    this.voteInFlight = false;
    await this.loadNext();
  }

  async retry(): Promise<void> {
    const action = this.retryAction;
    this.retryAction = null;
    if (action) {
      await action();
    } else {
      await this.loadNext();
    }
  }

  // failure handling ---------------------------------------------------------

  private async guarded(action: () => Promise<void>): Promise<void> {
    try {
      await action();
    } catch (err) {
      this.fail(err, action);
    }
  }

  private fail(err: unknown, retryAction: () => Promise<void>): void {
    if (err instanceof ApiError && err.status === 404) {
      // unknown subject: prompt re-entry instead of a dead end
      this.subject = '';
      this.setText('landing-message', `Subject rejected: ${err.message}`);
      this.show('landing');
      return;
    }
    this.retryAction = retryAction;
    this.setText('error-text', err instanceof Error ? err.message : 'request failed');
    this.show('error');
  }

  // dom helpers ---------------------------------------------------------------

  private show(phase: Phase): void {
    this.phase = phase;
    for (const section of ['landing', 'rating', 'complete', 'error'] as const) {
      this.el(`${section}-section`).toggleAttribute('hidden', section !== phase);
    }
  }

  private updateSelectionUi(): void {
    this.el('left-pane').classList.toggle('selected', this.selected === 'left');
    this.el('right-pane').classList.toggle('selected', this.selected === 'right');
    const confirm = this.el('confirm-btn') as HTMLButtonElement;
    confirm.disabled = this.selected === null || this.voteInFlight;
  }

  private setText(id: string, text: string): void {
    this.el(id).textContent = text;
  }

  private el(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  }

  private img(id: string): HTMLImageElement {
    return this.el(id) as HTMLImageElement;
  }

  private input(id: string): HTMLInputElement {
    return this.el(id) as HTMLInputElement;
  }
}
