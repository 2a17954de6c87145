/**
 * Latest-wins request scheduling for interactive panels.
 *
 * One request in flight at a time; triggers arriving while busy (or inside
 * the minimum spacing window) replace the pending job instead of queueing,
 * which bounds the request rate and keeps sliders responsive.
 */

type Job = () => Promise<void>;

export class LatestWins {
  private pending: Job | null = null;
  private busy = false;
  private waiting = false;
  private lastStart = -Infinity;
  started = 0;

  constructor(
    private readonly minIntervalMs: number,
    private readonly now: () => number = () => Date.now(),
    private readonly defer: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  schedule(job: Job): void {
    this.pending = job;
    this.pump();
  }

  private pump(): void {
    if (this.busy || this.waiting || this.pending === null) return;
    const wait = this.lastStart + this.minIntervalMs - this.now();
    if (wait > 0) {
      this.waiting = true;
      this.defer(() => {
        this.waiting = false;
        this.pump();
      }, wait);
      return;
    }
    const job = this.pending;
    this.pending = null;
    this.busy = true;
    this.lastStart = this.now();
    this.started += 1;
    job()
      .catch(() => undefined)
      .finally(() => {
        this.busy = false;
        this.pump();
      });
  }
}
