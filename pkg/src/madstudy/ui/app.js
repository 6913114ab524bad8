"use strict";
(() => {
  // src/api.ts
  var ApiError = class extends Error {
    constructor(status, message) {
      super(message);
      this.status = status;
    }
  };
  var StudyApi = class {
    constructor(base = "", fetchFn = (input, init) => fetch(input, init)) {
      this.base = base;
      this.fetchFn = fetchFn;
    }
    url(path) {
      return this.base + path;
    }
    async next(subject, after) {
      const suffix = after ? `?after=${encodeURIComponent(after)}` : "";
      const resp = await this.fetchFn(
        this.url(`/api/session/${encodeURIComponent(subject)}/next${suffix}`)
      );
      if (!resp.ok) {
        throw new ApiError(resp.status, await describe(resp));
      }
      return await resp.json();
    }
    /** Resolves for 2xx and 409 (the caller advances either way); throws otherwise. */
    async vote(subject, trialId, position) {
      const resp = await this.fetchFn(
        this.url(`/api/session/${encodeURIComponent(subject)}/vote`),
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ trial_id: trialId, position })
        }
      );
      if (resp.ok) {
        return { status: resp.status, ack: await resp.json() };
      }
      if (resp.status === 409) {
        return { status: 409, ack: null };
      }
      throw new ApiError(resp.status, await describe(resp));
    }
  };
  async function describe(resp) {
    try {
      const body = await resp.json();
      return body.error ?? `HTTP ${resp.status}`;
    } catch {
      return `HTTP ${resp.status}`;
    }
  }

  // src/viewer.ts
  var MIN_SCALE = 1;
  var MAX_SCALE = 16;
  var SyncedViewer = class {
    constructor(panes, images) {
      this.panes = panes;
      this.images = images;
      this.transform = { scale: 1, x: 0, y: 0 };
      this.dragging = false;
      this.lastX = 0;
      this.lastY = 0;
    }
    attach() {
      for (const pane of this.panes) {
        pane.addEventListener("wheel", (ev) => {
          ev.preventDefault();
          const rect = pane.getBoundingClientRect();
          const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
          this.zoomAt(ev.clientX - rect.left, ev.clientY - rect.top, factor);
        });
        pane.addEventListener("pointerdown", (ev) => {
          this.dragging = true;
          this.lastX = ev.clientX;
          this.lastY = ev.clientY;
        });
        pane.addEventListener("pointermove", (ev) => {
          if (!this.dragging) return;
          this.pan(ev.clientX - this.lastX, ev.clientY - this.lastY);
          this.lastX = ev.clientX;
          this.lastY = ev.clientY;
        });
        const stop = () => {
          this.dragging = false;
        };
        pane.addEventListener("pointerup", stop);
        pane.addEventListener("pointerleave", stop);
      }
    }
    /** Zoom about a point given in pane coordinates; both panes follow. */
    zoomAt(px, py, factor) {
      const next = clamp(this.transform.scale * factor, MIN_SCALE, MAX_SCALE);
      const applied = next / this.transform.scale;
      this.transform = {
        scale: next,
        x: px - applied * (px - this.transform.x),
        y: py - applied * (py - this.transform.y)
      };
      if (this.transform.scale === MIN_SCALE) {
        this.transform.x = 0;
        this.transform.y = 0;
      }
      this.apply();
    }
    pan(dx, dy) {
      if (this.transform.scale === MIN_SCALE) return;
      this.transform = {
        scale: this.transform.scale,
        x: this.transform.x + dx,
        y: this.transform.y + dy
      };
      this.apply();
    }
    reset() {
      this.transform = { scale: 1, x: 0, y: 0 };
      this.apply();
    }
    apply() {
      const { scale, x, y } = this.transform;
      const css = `translate(${x}px, ${y}px) scale(${scale})`;
      for (const img of this.images) {
        img.style.transform = css;
      }
    }
  };
  function clamp(value, lo, hi) {
    return Math.min(hi, Math.max(lo, value));
  }

  // src/types.ts
  function isComplete(r) {
    return r.complete === true;
  }

  // src/app.ts
  var RaterApp = class {
    constructor(doc, api) {
      this.doc = doc;
      this.api = api;
      this.phase = "landing";
      this.subject = "";
      this.current = null;
      this.selected = null;
      /** Images for the upcoming trial, held so the browser keeps them warm. */
      this.preloadedImages = [];
      this.voteInFlight = false;
      this.retryAction = null;
      this.viewer = new SyncedViewer(
        [this.el("left-pane"), this.el("right-pane")],
        [this.img("left-img"), this.img("right-img")]
      );
    }
    // wiring -----------------------------------------------------------------
    attach() {
      this.viewer.attach();
      this.el("start-btn").addEventListener("click", () => {
        void this.start(this.input("subject-input").value.trim());
      });
      this.input("subject-input").addEventListener("keydown", (ev) => {
        if (ev.key === "Enter") {
          void this.start(this.input("subject-input").value.trim());
        }
      });
      this.el("left-pane").addEventListener("click", () => this.select("left"));
      this.el("right-pane").addEventListener("click", () => this.select("right"));
      this.el("confirm-btn").addEventListener("click", () => {
        void this.confirm();
      });
      this.el("retry-btn").addEventListener("click", () => {
        void this.retry();
      });
      this.doc.addEventListener("keydown", (ev) => this.onKey(ev));
      const fromHash = this.doc.defaultView?.location.hash.match(/^#s=(.+)$/);
      if (fromHash) {
        void this.start(decodeURIComponent(fromHash[1]));
      } else {
        this.show("landing");
      }
    }
    onKey(ev) {
      if (this.phase !== "rating") return;
      if (ev.key === "ArrowLeft") {
        this.select("left");
      } else if (ev.key === "ArrowRight") {
        this.select("right");
      } else if (ev.key === "Enter") {
        void this.confirm();
      }
    }
    // session ----------------------------------------------------------------
    async start(subject) {
      if (!subject) {
        this.setText("landing-message", "Enter a subject identifier to begin.");
        return;
      }
      this.subject = subject;
      const win = this.doc.defaultView;
      if (win) {
        win.location.hash = `s=${encodeURIComponent(subject)}`;
      }
      await this.loadNext();
    }
    async loadNext() {
      await this.guarded(async () => {
        const next = await this.api.next(this.subject);
        if (isComplete(next)) {
          this.current = null;
          this.setText("complete-text", `All done: ${next.done} of ${next.total} comparisons.`);
          this.show("complete");
          return;
        }
        this.renderTrial(next);
      });
    }
    renderTrial(view) {
      this.current = view;
      this.selected = null;
      this.voteInFlight = false;
      this.img("left-img").src = this.api.url(view.left);
      this.img("right-img").src = this.api.url(view.right);
      this.viewer.reset();
      this.updateSelectionUi();
      this.setText("progress-text", `${view.done + 1} / ${view.total}`);
      this.show("rating");
      this.preloadUpcoming(view.trial_id);
    }
    /** Fetch the following trial and warm its images while the rater deliberates. */
    preloadUpcoming(afterTrialId) {
      void this.api.next(this.subject, afterTrialId).then((upcoming) => {
        if (isComplete(upcoming)) return;
        this.preloadedImages = [upcoming.left, upcoming.right].map((url) => {
          const img = this.doc.createElement("img");
          img.src = this.api.url(url);
          return img;
        });
      }).catch(() => {
        this.preloadedImages = [];
      });
    }
    select(side) {
      if (this.phase !== "rating" || this.voteInFlight) return;
      this.selected = side;
      this.updateSelectionUi();
    }
    async confirm() {
      if (this.phase !== "rating" || !this.current || !this.selected) return;
      if (this.voteInFlight) return;
      await this.submitVote(this.current.trial_id, this.selected);
    }
    /** POST one vote; a 409 means the server already has it, so advance. */
    async submitVote(trialId, position) {
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
    async retry() {
      const action = this.retryAction;
      this.retryAction = null;
      if (action) {
        await action();
      } else {
        await this.loadNext();
      }
    }
    // failure handling ---------------------------------------------------------
    async guarded(action) {
      try {
        await action();
      } catch (err) {
        this.fail(err, action);
      }
    }
    fail(err, retryAction) {
      if (err instanceof ApiError && err.status === 404) {
        this.subject = "";
        this.setText("landing-message", `Subject rejected: ${err.message}`);
        this.show("landing");
        return;
      }
      this.retryAction = retryAction;
      this.setText("error-text", err instanceof Error ? err.message : "request failed");
      this.show("error");
    }
    // dom helpers ---------------------------------------------------------------
    show(phase) {
      this.phase = phase;
      for (const section of ["landing", "rating", "complete", "error"]) {
        this.el(`${section}-section`).toggleAttribute("hidden", section !== phase);
      }
    }
    updateSelectionUi() {
      this.el("left-pane").classList.toggle("selected", this.selected === "left");
      this.el("right-pane").classList.toggle("selected", this.selected === "right");
      const confirm = this.el("confirm-btn");
      confirm.disabled = this.selected === null || this.voteInFlight;
    }
    setText(id, text) {
      this.el(id).textContent = text;
    }
    el(id) {
      const node = this.doc.getElementById(id);
      if (!node) throw new Error(`missing element #${id}`);
      return node;
    }
    img(id) {
      return this.el(id);
    }
    input(id) {
      return this.el(id);
    }
  };

  // src/main.ts
  document.addEventListener("DOMContentLoaded", () => {
    new RaterApp(document, new StudyApi("")).attach();
  });
})();
