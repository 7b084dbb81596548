// DOM wiring for the what-if page: load a model, toggle per-category
// affinities, slide lambda, watch the assignment bars and the lambda path.

import { ApiClient, Prediction } from './api.js';
import {
  renderAssignmentView,
  renderErrorPanel,
  renderHistory,
  renderLambdaPath,
  renderStaleBanner,
} from './render.js';
import { WhatIfSession, lambdaToSlider, sliderToLambda } from './session.js';

const SLIDER_DEBOUNCE_MS = 120;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function categoryNames(k: number): string[] {
  return Array.from({ length: k }, (_, i) => `category ${i}`);
}

let session: WhatIfSession | null = null;
let names: string[] = [];
let sliderTimer: number | undefined;

function renderPrediction(pred: Prediction, previous: Prediction | null): void {
  el('current-view').innerHTML = renderAssignmentView(pred, names);
  el('previous-view').innerHTML = previous
    ? renderAssignmentView(previous, names)
    : '<p class="placeholder">no previous result yet</p>';
  if (session) {
    el('history-view').innerHTML = renderHistory(session.history, names);
    el('lambda-readout').textContent = `λ = ${session.lambda.toPrecision(3)}`;
  }
  el('error-view').innerHTML = '';
  void refreshPath();
}

async function refreshPath(): Promise<void> {
  if (!session) return;
  try {
    const gridSize = 25;
    const lambdas = Array.from({ length: gridSize }, (_, i) =>
      sliderToLambda(i / (gridSize - 1)));
    const predictions = await session.lambdaPath(gridSize);
    el('path-view').innerHTML = renderLambdaPath({
      lambdas,
      predictions,
      categoryNames: names,
    });
  } catch {
    // path strip is best-effort; the main view already reports errors
  }
}

function renderToggles(): void {
  if (!session) return;
  const buttons = session.g
    .map((value, index) => {
      const state = value > 0 ? 'pos' : value < 0 ? 'neg' : 'zero';
      const label = value > 0 ? '+1' : value < 0 ? '−1' : '0';
      return (
        `<button class="toggle ${state}" data-index="${index}">` +
        `${names[index]}: ${label}</button>`
      );
    })
    .join('');
  el('toggles').innerHTML = buttons;
}

async function loadModel(): Promise<void> {
  const base = (el<HTMLInputElement>('base-url')).value.replace(/\/$/, '');
  const modelId = (el<HTMLInputElement>('model-id')).value.trim();
  const api = new ApiClient(base);
  try {
    const meta = await api.modelMeta(modelId);
    names = categoryNames(meta.k);
    const wText = (el<HTMLTextAreaElement>('w-input')).value.trim();
    let w: number[];
    if (wText) {
      w = wText.split(/[\s,]+/).map(Number);
    } else {
      w = new Array(meta.n).fill(0);
      w[0] = 1;
    }
    session = new WhatIfSession(api, modelId, w, meta.k, {
      onPrediction: (pred, previous) => {
        renderPrediction(pred, previous);
        renderToggles();
      },
      onError: (message) => {
        el('error-view').innerHTML = session?.lastPrediction
          ? renderStaleBanner()
          : renderErrorPanel(message);
      },
    });
    const slider = el<HTMLInputElement>('lambda-slider');
    slider.value = String(lambdaToSlider(session.lambda));
    renderToggles();
    session.refresh();
  } catch (err) {
    el('error-view').innerHTML = renderErrorPanel(
      err instanceof Error ? err.message : String(err));
  }
}

export function wireUp(): void {
  el('load-model').addEventListener('click', () => void loadModel());
  el('toggles').addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const index = target.dataset?.index;
    if (index !== undefined && session) {
      session.toggleCategory(Number(index));
      renderToggles();
    }
  });
  el<HTMLInputElement>('lambda-slider').addEventListener('input', (event) => {
    const position = Number((event.target as HTMLInputElement).value);
    window.clearTimeout(sliderTimer);
    sliderTimer = window.setTimeout(() => {
      session?.setLambdaFromSlider(position);
    }, SLIDER_DEBOUNCE_MS);
  });
  el('error-view').addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    if (target.dataset?.action === 'retry') session?.refresh();
  });
  el('advanced-apply').addEventListener('click', () => {
    if (!session) return;
    const index = Number(el<HTMLInputElement>('advanced-index').value);
    const value = Number(el<HTMLInputElement>('advanced-value').value);
    try {
      session.setAffinity(index, value);
      renderToggles();
    } catch (err) {
      el('error-view').innerHTML = renderErrorPanel(
        err instanceof Error ? err.message : String(err));
    }
  });
}

if (typeof document !== 'undefined' && document.getElementById('load-model')) {
  wireUp();
}
