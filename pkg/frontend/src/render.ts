// Pure HTML/SVG string builders for the assignment view and the lambda
// path strip. Every number shown comes from a service response.

import { Prediction } from './api.js';
import { topCategories } from './session.js';

const MODE_LABELS: Record<string, string> = {
  crowd_only: 'crowd-only',
  lambda0_closed_form: 'closed-form',
  projected: 'projected',
};

export function formatPercent(mass: number): string {
  return `${(100 * mass).toFixed(1)}%`;
}

export function modeBadge(pred: Prediction): string {
  const label = MODE_LABELS[pred.mode] ?? pred.mode;
  const tie = pred.tie ? ' <span class="badge tie">tie</span>' : '';
  const warning = pred.warning
    ? ` <span class="badge warning" title="${escapeHtml(pred.warning)}">!</span>`
    : '';
  return `<span class="badge mode">${label}</span>${tie}${warning}`;
}

export function renderAssignmentView(
  pred: Prediction,
  categoryNames: string[],
  highlightCount = 5,
): string {
  if (!pred || !Array.isArray(pred.z) || pred.z.some((v) => typeof v !== 'number')) {
    return renderErrorPanel('malformed prediction payload');
  }
  const k = pred.z.length;
  const highlighted = new Set(topCategories(pred.z, Math.min(highlightCount, k)));
  const order = topCategories(pred.z, k);
  const rows = order
    .map((index) => {
      const mass = pred.z[index];
      const name = categoryNames[index] ?? `category ${index}`;
      const width = Math.max(0, Math.min(100, 100 * mass));
      const cls = highlighted.has(index) ? 'bar-row top' : 'bar-row';
      return (
        `<div class="${cls}" data-category="${index}">` +
        `<div class="bar-label">${escapeHtml(name)}</div>` +
        `<div class="bar-track"><div class="bar-fill" style="width:${width}%"></div></div>` +
        `<div class="bar-value">${formatPercent(mass)}</div>` +
        `</div>`
      );
    })
    .join('');
  return `<div class="assignment-view">${modeBadge(pred)}${rows}</div>`;
}

export function renderErrorPanel(message: string): string {
  return `<div class="error-panel">prediction failed: ${escapeHtml(message)}</div>`;
}

export function renderStaleBanner(): string {
  return '<div class="stale-banner">showing a stale result; retrying may help' +
    ' <button data-action="retry">retry</button></div>';
}

export interface PathStripInput {
  lambdas: number[];
  predictions: Prediction[];
  categoryNames: string[];
}

export function renderLambdaPath(input: PathStripInput, width = 560, height = 180): string {
  const { lambdas, predictions, categoryNames } = input;
  if (predictions.length === 0) return '<svg class="lambda-path"></svg>';
  const k = predictions[0].z.length;
  const left = 40;
  const right = width - 10;
  const top = 16;
  const bottom = height - 24;
  const logs = lambdas.map((value) => Math.log10(value));
  const minLog = Math.min(...logs);
  const maxLog = Math.max(...logs);
  const x = (lambda: number) =>
    left + ((Math.log10(lambda) - minLog) / (maxLog - minLog || 1)) * (right - left);
  const y = (mass: number) => bottom - mass * (bottom - top);
  const lines = [];
  for (let c = 0; c < k; c += 1) {
    const pts = predictions
      .map((pred, i) => `${x(lambdas[i]).toFixed(2)},${y(pred.z[c]).toFixed(2)}`)
      .join(' ');
    const name = escapeHtml(categoryNames[c] ?? `category ${c}`);
    lines.push(
      `<polyline class="path-line cat-${c}" fill="none" points="${pts}">` +
      `<title>${name}</title></polyline>`,
    );
  }
  const endpoints =
    `<text class="endpoint expert" x="${left}" y="${height - 6}">expert (&#955;&#8594;0)</text>` +
    `<text class="endpoint crowd" x="${right}" y="${height - 6}" text-anchor="end">` +
    'crowd (&#955;&#8594;&#8734;)</text>';
  return (
    `<svg class="lambda-path" viewBox="0 0 ${width} ${height}" role="img">` +
    `${lines.join('')}${endpoints}</svg>`
  );
}

export function renderHistory(rows: { lambda: number; edits: Record<number, number>;
  topCategories: number[]; mode: string }[], categoryNames: string[]): string {
  const body = rows
    .map((row, i) => {
      const edits = Object.entries(row.edits)
        .map(([index, value]) => `${categoryNames[Number(index)] ?? index}:${value > 0 ? '+' : ''}${value}`)
        .join(' ') || 'none';
      const tops = row.topCategories
        .map((c) => escapeHtml(categoryNames[c] ?? `category ${c}`))
        .join(', ');
      return (
        `<tr data-row="${i}"><td>${i + 1}</td><td>${row.lambda.toPrecision(3)}</td>` +
        `<td>${escapeHtml(edits)}</td><td>${tops}</td><td>${row.mode}</td></tr>`
      );
    })
    .join('');
  return (
    '<table class="history"><thead><tr><th>#</th><th>&#955;</th><th>edits</th>' +
    `<th>top categories</th><th>mode</th></tr></thead><tbody>${body}</tbody></table>`
  );
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
