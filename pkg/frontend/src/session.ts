// What-if session state: the current test item's similarities, ternary
// affinity edits, the lambda slider, and an append-only history. At most
// one prediction request is in flight; edits made while waiting coalesce
// into a single trailing request whose result wins.

import { ApiClient, Prediction } from './api.js';

export type Ternary = -1 | 0 | 1;

export interface HistoryRow {
  lambda: number;
  edits: Record<number, number>;
  topCategories: number[];
  mode: string;
}

export const LAMBDA_MIN = 1e-3;
export const LAMBDA_MAX = 1e3;

// slider position in [0, 1] <-> lambda on a log scale
export function sliderToLambda(position: number): number {
  const clamped = Math.min(1, Math.max(0, position));
  const logMin = Math.log10(LAMBDA_MIN);
  const logMax = Math.log10(LAMBDA_MAX);
  return 10 ** (logMin + clamped * (logMax - logMin));
}

export function lambdaToSlider(lambda: number): number {
  const logMin = Math.log10(LAMBDA_MIN);
  const logMax = Math.log10(LAMBDA_MAX);
  return (Math.log10(lambda) - logMin) / (logMax - logMin);
}

export function topCategories(z: number[], count: number): number[] {
  return z
    .map((mass, index) => ({ mass, index }))
    .sort((a, b) => b.mass - a.mass || a.index - b.index)
    .slice(0, count)
    .map((entry) => entry.index);
}

export function cycleTernary(value: Ternary): Ternary {
  if (value === 0) return 1;
  if (value === 1) return -1;
  return 0;
}

interface SessionEvents {
  onPrediction?: (pred: Prediction, previous: Prediction | null) => void;
  onError?: (message: string) => void;
}

export class WhatIfSession {
  readonly g: number[];
  lambda = 1.0;
  history: HistoryRow[] = [];
  lastPrediction: Prediction | null = null;
  previousPrediction: Prediction | null = null;

  private inFlight = false;
  private pending = false;
  private seq = 0;

  constructor(
    private api: ApiClient,
    readonly modelId: string,
    public w: number[],
    readonly k: number,
    private events: SessionEvents = {},
    private annotationLength = 5,
  ) {
    this.g = new Array(k).fill(0);
  }

  toggleCategory(index: number): void {
    if (index < 0 || index >= this.k) throw new Error(`category ${index} out of range`);
    this.g[index] = cycleTernary(this.g[index] as Ternary);
    this.refresh();
  }

  setAffinity(index: number, value: number): void {
    // advanced entry: any value in [-1, 1]
    if (index < 0 || index >= this.k) throw new Error(`category ${index} out of range`);
    if (value < -1 || value > 1) throw new Error(`affinity ${value} outside [-1, 1]`);
    this.g[index] = value;
    this.refresh();
  }

  setLambdaFromSlider(position: number): void {
    this.lambda = sliderToLambda(position);
    this.refresh();
  }

  edits(): Record<number, number> {
    const edits: Record<number, number> = {};
    this.g.forEach((value, index) => {
      if (value !== 0) edits[index] = value;
    });
    return edits;
  }

  /** Issue (or queue) a prediction for the current controls. */
  refresh(): void {
    if (this.inFlight) {
      this.pending = true;
      return;
    }
    this.inFlight = true;
    const requestSeq = ++this.seq;
    const lambda = this.lambda;
    const edits = this.edits();
    this.api
      .predict(this.modelId, this.w, [...this.g], lambda)
      .then((pred) => {
        if (requestSeq === this.seq) {
          this.previousPrediction = this.lastPrediction;
          this.lastPrediction = pred;
          this.history.push({
            lambda,
            edits,
            topCategories: topCategories(pred.z, this.annotationLength),
            mode: pred.mode,
          });
          this.events.onPrediction?.(pred, this.previousPrediction);
        }
      })
      .catch((err) => {
        this.events.onError?.(err instanceof Error ? err.message : String(err));
      })
      .finally(() => {
        this.inFlight = false;
        if (this.pending) {
          this.pending = false;
          this.refresh();
        }
      });
  }

  /** Re-issue a history row's controls; determinism means identical tops. */
  async replay(row: HistoryRow): Promise<number[]> {
    const g = new Array(this.k).fill(0);
    for (const [index, value] of Object.entries(row.edits)) {
      g[Number(index)] = value;
    }
    const pred = await this.api.predict(this.modelId, this.w, g, row.lambda);
    return topCategories(pred.z, this.annotationLength);
  }

  lambdaPath(gridSize = 25): Promise<Prediction[]> {
    const grid: number[] = [];
    for (let i = 0; i < gridSize; i += 1) {
      grid.push(sliderToLambda(i / (gridSize - 1)));
    }
    return this.api.lambdaPath(this.modelId, this.w, [...this.g], grid);
  }
}
