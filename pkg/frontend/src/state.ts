/** Studio state machine: selection, threshold staleness, recipe history.
 *
 * Invariants enforced here rather than in the DOM layer:
 *  - changing the threshold or the source set marks the mean stale, and a
 *    stale mean blocks splicing until it is recomputed;
 *  - splicing needs at least one source and a target;
 *  - history entries are frozen at record time and replay their exact
 *    serialized request bodies.
 */

import type { MeanResponse, SpliceResponse } from "./api.js";

export interface Recipe {
  readonly sourceIds: readonly string[];
  readonly tau: number;
  readonly targetId: string;
  readonly seed: number;
  /** Exact JSON sent to /splice; replays must be byte-identical. */
  readonly bodyJson: string;
  readonly asserted: number;
}

export const DEFAULT_TAU_STOPS = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

export class LatestOnly {
  private seq = 0;

  /** Run a request; resolve null if a newer request started meanwhile. */
  async run<T>(fn: () => Promise<T>): Promise<T | null> {
    const mine = ++this.seq;
    const out = await fn();
    return mine === this.seq ? out : null;
  }
}

export class StudioState {
  readonly tauStops: readonly number[];
  private readonly selected = new Set<string>();
  private _tau: number;
  private _targetId: string | null = null;
  private _meanStale = true;
  lastMean: MeanResponse | null = null;
  lastSplice: SpliceResponse | null = null;
  private _history: Recipe[] = [];
  seed = 0;

  constructor(tauStops: readonly number[] = DEFAULT_TAU_STOPS) {
    if (!tauStops.length) throw new Error("need at least one tau stop");
    this.tauStops = [...tauStops];
    this._tau = this.tauStops[0];
  }

  get sourceIds(): string[] {
    return [...this.selected].sort();
  }

  get tau(): number {
    return this._tau;
  }

  get targetId(): string | null {
    return this._targetId;
  }

  get meanStale(): boolean {
    return this._meanStale;
  }

  get history(): readonly Recipe[] {
    return this._history;
  }

  toggleSource(id: string): void {
    if (this.selected.has(id)) this.selected.delete(id);
    else this.selected.add(id);
    this.invalidateMean();
  }

  clearSources(): void {
    this.selected.clear();
    this.invalidateMean();
  }

  setTau(tau: number): void {
    if (!this.tauStops.includes(tau)) {
      throw new Error(`tau ${tau} is not one of the configured stops`);
    }
    if (tau !== this._tau) {
      this._tau = tau;
      this.invalidateMean();
    }
  }

  setTarget(id: string | null): void {
    this._targetId = id;
  }

  private invalidateMean(): void {
    this._meanStale = true;
    this.lastMean = null;
  }

  get canComputeMean(): boolean {
    return this.selected.size > 0;
  }

  /** The splice action is allowed only with sources, a target, and a mean
   * freshly computed for the current tau/source selection. */
  get canSplice(): boolean {
    return this.canComputeMean && this._targetId !== null && !this._meanStale;
  }

  meanRequestBody(): string {
    if (!this.canComputeMean) throw new Error("no sources selected");
    return JSON.stringify({
      source_ids: this.sourceIds,
      tau: this._tau,
      seed: this.seed,
    });
  }

  applyMean(mean: MeanResponse): void {
    this.lastMean = mean;
    this._meanStale = false;
  }

  spliceRequestBody(): string {
    if (!this.canSplice) throw new Error("splice is not allowed in this state");
    return JSON.stringify({
      source_ids: this.sourceIds,
      tau: this._tau,
      target_id: this._targetId,
      seed: this.seed,
    });
  }

  recordSplice(bodyJson: string, result: SpliceResponse): Recipe {
    const recipe: Recipe = Object.freeze({
      sourceIds: Object.freeze(this.sourceIds),
      tau: this._tau,
      targetId: this._targetId as string,
      seed: this.seed,
      bodyJson,
      asserted: result.asserted,
    });
    this._history = [...this._history, recipe];
    this.lastSplice = result;
    return recipe;
  }

  /** Restore a recipe's selection so the user can fork it. */
  loadRecipe(recipe: Recipe): void {
    this.selected.clear();
    for (const id of recipe.sourceIds) this.selected.add(id);
    this._tau = recipe.tau;
    this._targetId = recipe.targetId;
    this.seed = recipe.seed;
    this.invalidateMean();
  }
}

export class FramePlayer {
  private frames: string[] = [];
  private index = 0;

  setFrames(frames: string[]): void {
    this.frames = [...frames];
    this.index = frames.length ? frames.length - 1 : 0;
  }

  get length(): number {
    return this.frames.length;
  }

  get position(): number {
    return this.index;
  }

  scrub(to: number): string | null {
    if (!this.frames.length) return null;
    this.index = Math.min(Math.max(0, Math.trunc(to)), this.frames.length - 1);
    return this.frames[this.index];
  }

  current(): string | null {
    return this.frames.length ? this.frames[this.index] : null;
  }
}
