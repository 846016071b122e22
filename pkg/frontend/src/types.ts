// Wire shapes of the search service. Field names mirror the JSON bodies.

export interface TagFilter {
  key: string;
  op: "eq" | "one_of" | "exists";
  value?: string | string[];
}

export interface ImrNode {
  id: number;
  name: string;
  filters: TagFilter[];
}

export interface ImrEdge {
  src: number;
  dst: number;
  maxDistanceM: number;
}

export interface ImrDoc {
  version: number;
  area: { type: "bbox" } | { type: "named"; value: string };
  nodes: ImrNode[];
  edges: ImrEdge[];
}

export interface SpotFeature {
  type: "Feature";
  id?: string;
  geometry: { type: string; coordinates: unknown };
  properties: {
    spot_index: number;
    node_id?: number;
    node_name?: string;
    tags?: Record<string, string>;
    span_m?: number;
    role?: "spot_center";
  };
}

export interface SearchResponse {
  imr: ImrDoc;
  spots: { type: "FeatureCollection"; features: SpotFeature[] };
  stats: {
    candidates: Record<string, number>;
    examinedPairs: number;
    elapsedMs: number;
  };
}

export interface AppConfig {
  apiBaseUrl: string;
  tileUrl: string;
  attribution: string;
}

// [minLon, minLat, maxLon, maxLat], the order the API expects
export type BboxArray = [number, number, number, number];
