/**
 * Pure waveform geometry: the pair being judged shares one vertical scale so
 * amplitude differences stay visible, and channels are arranged in a fixed
 * grid (4 x 8 by default, matching the probe layout).
 */

export interface Scale {
  lo: number;
  hi: number;
}

/** One vertical scale covering every channel of both units. */
export function sharedScale(a: number[][], b: number[][]): Scale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const waveform of [a, b]) {
    for (const channel of waveform) {
      for (const v of channel) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
    }
  }
  if (!isFinite(lo) || !isFinite(hi)) {
    return { lo: 0, hi: 1 };
  }
  if (lo === hi) {
    // flat traces still need a nonzero span to land mid-box
    return { lo: lo - 0.5, hi: hi + 0.5 };
  }
  return { lo, hi };
}

/** SVG polyline points for one channel inside a width x height box. */
export function polylinePoints(
  samples: number[],
  scale: Scale,
  width: number,
  height: number,
): string {
  if (samples.length === 0) {
    return "";
  }
  const span = scale.hi - scale.lo;
  const dx = samples.length > 1 ? width / (samples.length - 1) : 0;
  const pts: string[] = [];
  for (let i = 0; i < samples.length; i++) {
    const v = samples[i]!;
    const x = samples.length > 1 ? i * dx : width / 2;
    const y = height - ((v - scale.lo) / span) * height;
    pts.push(`${round2(x)},${round2(y)}`);
  }
  return pts.join(" ");
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

/** Arrange channels row-major into grid rows of `columns` channels. */
export function channelGrid(waveform: number[][], columns = 8): number[][][] {
  const rows: number[][][] = [];
  for (let i = 0; i < waveform.length; i += columns) {
    rows.push(waveform.slice(i, i + columns));
  }
  return rows;
}

/** Sessions covered by a block, for the completion cluster cards. */
export function sessionsCovered(members: number[], sessionOf: Map<number, number>): number[] {
  const seen = new Set<number>();
  for (const unit of members) {
    const s = sessionOf.get(unit);
    if (s !== undefined) {
      seen.add(s);
    }
  }
  return [...seen].sort((x, y) => x - y);
}
