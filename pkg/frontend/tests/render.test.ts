import { describe, expect, it } from 'vitest';

import { Prediction } from '../src/api.js';
import {
  formatPercent,
  renderAssignmentView,
  renderErrorPanel,
  renderHistory,
  renderLambdaPath,
} from '../src/render.js';

function prediction(z: number[], mode: Prediction['mode'] = 'projected',
                    extra: Partial<Prediction> = {}): Prediction {
  return { z, zbar: z, gamma: 0.5, mode, tie: false, warning: null,
           cache_hit: false, ...extra };
}

const names = (k: number) => Array.from({ length: k }, (_, i) => `cat ${i}`);

describe('renderAssignmentView', () => {
  it('shows the crowd-only badge for crowd predictions', () => {
    const html = renderAssignmentView(prediction([0.5, 0.5], 'crowd_only'), names(2));
    expect(html).toContain('crowd-only');
  });

  it('renders a single full bar for a one-hot prediction', () => {
    const html = renderAssignmentView(prediction([0, 1, 0]), names(3));
    const widths = [...html.matchAll(/width:([\d.]+)%/g)].map((m) => Number(m[1]));
    expect(widths.filter((w) => w === 100).length).toBe(1);
    expect(widths.filter((w) => w === 0).length).toBe(2);
  });

  it('bar widths sum to 100% for simplex input', () => {
    const z = [0.15, 0.4, 0.25, 0.2];
    const html = renderAssignmentView(prediction(z), names(4));
    const widths = [...html.matchAll(/width:([\d.]+)%/g)].map((m) => Number(m[1]));
    expect(widths.reduce((a, b) => a + b, 0)).toBeCloseTo(100, 9);
  });

  it('sorts categories by mass and highlights the top five of 27', () => {
    const z = Array.from({ length: 27 }, (_, i) => (i + 1) / (27 * 14));
    const html = renderAssignmentView(prediction(z), names(27));
    const order = [...html.matchAll(/data-category="(\d+)"/g)].map((m) => Number(m[1]));
    expect(order[0]).toBe(26); // biggest mass first
    expect(order.length).toBe(27);
    const highlighted = [...html.matchAll(/class="bar-row top" data-category="(\d+)"/g)]
      .map((m) => Number(m[1]));
    expect(highlighted).toEqual([26, 25, 24, 23, 22]);
  });

  it('shows tie and warning badges', () => {
    const html = renderAssignmentView(
      prediction([0.5, 0.5], 'lambda0_closed_form',
                 { tie: true, warning: 'no information' }), names(2));
    expect(html).toContain('closed-form');
    expect(html).toContain('tie');
    expect(html).toContain('no information');
  });

  it('malformed payload renders an error panel instead of crashing', () => {
    const broken = { mode: 'projected' } as unknown as Prediction;
    const html = renderAssignmentView(broken, names(2));
    expect(html).toContain('error-panel');
  });
});

describe('renderLambdaPath', () => {
  it('flat curves when every prediction equals the crowd average', () => {
    const zbar = [0.3, 0.7];
    const lambdas = [0.01, 0.1, 1, 10, 100];
    const predictions = lambdas.map(() => prediction([...zbar], 'crowd_only'));
    const svg = renderLambdaPath({ lambdas, predictions, categoryNames: names(2) });
    const polylines = [...svg.matchAll(/points="([^"]+)"/g)].map((m) => m[1]);
    expect(polylines.length).toBe(2);
    for (const pts of polylines) {
      const ys = pts.split(' ').map((pair) => Number(pair.split(',')[1]));
      expect(new Set(ys).size).toBe(1);
    }
  });

  it('annotates the expert and crowd endpoints', () => {
    const lambdas = [0.001, 1000];
    const predictions = [prediction([1, 0]), prediction([0.5, 0.5], 'crowd_only')];
    const svg = renderLambdaPath({ lambdas, predictions, categoryNames: names(2) });
    expect(svg).toContain('expert');
    expect(svg).toContain('crowd');
    expect(svg).toContain('&#955;');
  });

  it('large-lambda endpoint carries the crowd-only values', () => {
    const lambdas = [0.01, 1, 1e6];
    const crowd = [0.25, 0.75];
    const predictions = [prediction([0.9, 0.1]), prediction([0.5, 0.5]),
                         prediction([...crowd], 'crowd_only')];
    const svg = renderLambdaPath({ lambdas, predictions, categoryNames: names(2) });
    const polylines = [...svg.matchAll(/points="([^"]+)"/g)].map((m) => m[1]);
    const lastYs = polylines.map((pts) => {
      const pairs = pts.split(' ');
      return Number(pairs[pairs.length - 1].split(',')[1]);
    });
    // y is a decreasing function of mass, so the endpoint ordering must
    // match the crowd ordering
    expect(lastYs[1]).toBeLessThan(lastYs[0]);
  });

  it('handles an empty batch', () => {
    expect(renderLambdaPath({ lambdas: [], predictions: [], categoryNames: [] }))
      .toContain('<svg');
  });
});

describe('history and helpers', () => {
  it('renders history rows with edits and tops', () => {
    const html = renderHistory([
      { lambda: 1, edits: { 1: 1 }, topCategories: [1, 0], mode: 'projected' },
      { lambda: 0.1, edits: {}, topCategories: [0, 1], mode: 'crowd_only' },
    ], names(2));
    expect(html).toContain('cat 1:+1');
    expect(html).toContain('none');
    expect([...html.matchAll(/<tr data-row=/g)].length).toBe(2);
  });

  it('formats percentages to one decimal', () => {
    expect(formatPercent(0.1234)).toBe('12.3%');
    expect(formatPercent(1)).toBe('100.0%');
  });

  it('escapes html in error panels', () => {
    expect(renderErrorPanel('<script>')).not.toContain('<script>');
  });
});
