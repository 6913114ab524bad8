export interface Transform {
  scale: number;
  x: number;
  y: number;
}

const MIN_SCALE = 1;
const MAX_SCALE = 16;

/**
 * Dual-pane viewer with one shared transform: zooming or panning either pane
 * moves both, so the rater always compares the same region of both images.
 */
export class SyncedViewer {
  transform: Transform = { scale: 1, x: 0, y: 0 };

  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private readonly panes: HTMLElement[],
    private readonly images: HTMLImageElement[],
  ) {}

  attach(): void {
    for (const pane of this.panes) {
      pane.addEventListener('wheel', (ev) => {
        ev.preventDefault();
        const rect = pane.getBoundingClientRect();
        const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
        this.zoomAt(ev.clientX - rect.left, ev.clientY - rect.top, factor);
      });
      pane.addEventListener('pointerdown', (ev) => {
        this.dragging = true;
        this.lastX = ev.clientX;
        this.lastY = ev.clientY;
      });
      pane.addEventListener('pointermove', (ev) => {
        if (!this.dragging) return;
        this.pan(ev.clientX - this.lastX, ev.clientY - this.lastY);
        this.lastX = ev.clientX;
        this.lastY = ev.clientY;
      });
      const stop = () => {
        this.dragging = false;
      };
      pane.addEventListener('pointerup', stop);
      pane.addEventListener('pointerleave', stop);
    }
  }

  /** Zoom about a point given in pane coordinates; both panes follow. */
  zoomAt(px: number, py: number, factor: number): void {
    const next = clamp(this.transform.scale * factor, MIN_SCALE, MAX_SCALE);
    const applied = next / this.transform.scale;
    this.transform = {
      scale: next,
      x: px - applied * (px - this.transform.x),
      y: py - applied * (py - this.transform.y),
    };
    if (this.transform.scale === MIN_SCALE) {
      this.transform.x = 0;
      this.transform.y = 0;
    }
    this.apply();
  }

  pan(dx: number, dy: number): void {
    if (this.transform.scale === MIN_SCALE) return;
    this.transform = {
      scale: this.transform.scale,
      x: this.transform.x + dx,
      y: this.transform.y + dy,
    };
    this.apply();
  }

  reset(): void {
    this.transform = { scale: 1, x: 0, y: 0 };
    this.apply();
  }

  apply(): void {
    const { scale, x, y } = this.transform;
    const css = `translate(${x}px, ${y}px) scale(${scale})`;
    for (const img of this.images) {
      img.style.transform = css;
    }
  }
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}
