import { ApiClient, ApiError } from "./api.js";
import type { BboxArray, SearchResponse, SpotFeature } from "./types.js";

export interface Bounds {
  minLon: number;
  minLat: number;
  maxLon: number;
  maxLat: number;
}

export interface UiState {
  queryText: string;
  bbox: Bounds | null;
  response: SearchResponse | null;
  selectedSpot: number | null;
  banner: string | null;
  inFlight: boolean;
}

export function spotCount(response: SearchResponse | null): number {
  if (!response) return 0;
  return response.spots.features.filter(
    (f) => f.properties.role === "spot_center").length;
}

export interface SpotSummary {
  index: number;
  spanM: number;
  center: { lat: number; lon: number };
  members: { uid: string; nodeName: string; lat: number; lon: number }[];
}

/** Regroup the flat FeatureCollection per spot, preserving response order. */
export function groupSpots(response: SearchResponse): SpotSummary[] {
  const out: SpotSummary[] = [];
  const byIndex = new Map<number, SpotSummary>();
  for (const f of response.spots.features) {
    const i = f.properties.spot_index;
    let spot = byIndex.get(i);
    if (!spot) {
      spot = { index: i, spanM: 0, center: { lat: 0, lon: 0 }, members: [] };
      byIndex.set(i, spot);
      out.push(spot);
    }
    const point = featurePoint(f);
    if (f.properties.role === "spot_center") {
      spot.spanM = f.properties.span_m ?? 0;
      spot.center = point;
    } else {
      spot.members.push({
        uid: f.id ?? "?",
        nodeName: f.properties.node_name ?? "?",
        lat: point.lat,
        lon: point.lon,
      });
    }
  }
  return out;
}

/** Representative point: the Point itself, or the outer-ring vertex mean. */
export function featurePoint(f: SpotFeature): { lat: number; lon: number } {
  const g = f.geometry;
  if (g.type === "Point") {
    const [lon, lat] = g.coordinates as [number, number];
    return { lat, lon };
  }
  const ring = (g.type === "Polygon"
    ? (g.coordinates as number[][][])[0]
    : (g.coordinates as number[][]));
  let lat = 0;
  let lon = 0;
  for (const [x, y] of ring) {
    lon += x;
    lat += y;
  }
  return { lat: lat / ring.length, lon: lon / ring.length };
}

export function toBboxArray(b: Bounds): BboxArray {
  return [b.minLon, b.minLat, b.maxLon, b.maxLat];
}

/**
 * All UI state plus the search lifecycle. A submit while another request is
 * in flight supersedes it: responses carry a sequence number and stale ones
 * are dropped without touching state.
 */
export class Store {
  state: UiState = {
    queryText: "",
    bbox: null,
    response: null,
    selectedSpot: null,
    banner: null,
    inFlight: false,
  };

  private seq = 0;
  private listeners: ((s: UiState) => void)[] = [];

  subscribe(fn: (s: UiState) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  private patch(partial: Partial<UiState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  setQuery(text: string): void {
    this.patch({ queryText: text });
  }

  setBbox(bbox: Bounds | null): void {
    this.patch({ bbox });
  }

  selectSpot(index: number | null): void {
    if (index !== null
        && (index < 0 || index >= spotCount(this.state.response))) {
      return; // out of range, keep the invariant instead of trusting callers
    }
    this.patch({ selectedSpot: index });
  }

  canSubmit(): boolean {
    return this.state.queryText.trim().length > 0 && !this.state.inFlight;
  }

  async submit(api: ApiClient): Promise<void> {
    if (this.state.queryText.trim().length === 0) return;
    const mySeq = ++this.seq;
    this.patch({ inFlight: true });
    try {
      const response = await api.search({
        sentence: this.state.queryText,
        ...(this.state.bbox ? { bbox: toBboxArray(this.state.bbox) } : {}),
      });
      if (mySeq !== this.seq) return; // superseded by a newer submit
      this.patch({ response, selectedSpot: null, banner: null,
                   inFlight: false });
    } catch (err) {
      if (mySeq !== this.seq) return;
      // error bodies are shown verbatim; everything else stays as it was
      const banner = err instanceof ApiError ? err.body : String(err);
      this.patch({ banner, inFlight: false });
    }
  }
}
