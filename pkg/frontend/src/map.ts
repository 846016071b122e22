import type { Bounds } from "./state.js";

const TILE = 256;

// Web Mercator tile coordinates (fractional)
export function lonToX(lon: number, zoom: number): number {
  return ((lon + 180) / 360) * Math.pow(2, zoom);
}

export function latToY(lat: number, zoom: number): number {
  const r = (lat * Math.PI) / 180;
  const n = Math.pow(2, zoom);
  return ((1 - Math.log(Math.tan(r) + 1 / Math.cos(r)) / Math.PI) / 2) * n;
}

export function xToLon(x: number, zoom: number): number {
  return (x / Math.pow(2, zoom)) * 360 - 180;
}

export function yToLat(y: number, zoom: number): number {
  const n = Math.PI - (2 * Math.PI * y) / Math.pow(2, zoom);
  return (180 / Math.PI) * Math.atan(0.5 * (Math.exp(n) - Math.exp(-n)));
}

/** Corner-order-independent bounds from two drag endpoints. */
export function normalizeBounds(
  a: { lat: number; lon: number },
  b: { lat: number; lon: number },
): Bounds {
  return {
    minLon: Math.min(a.lon, b.lon),
    minLat: Math.min(a.lat, b.lat),
    maxLon: Math.max(a.lon, b.lon),
    maxLat: Math.max(a.lat, b.lat),
  };
}

export interface Marker {
  lat: number;
  lon: number;
  kind: "member" | "center";
  title: string;
  spotIndex: number;
}

export interface MapOptions {
  tileUrl: string;
  center: { lat: number; lon: number };
  zoom: number;
  // jsdom has no layout, so tests pass explicit pixel sizes
  width?: number;
  height?: number;
}

/**
 * Minimal raster slippy map: positioned tile images, marker divs, one bbox
 * rectangle, drag to pan, a one-shot bbox drawing mode, wheel zoom.
 */
export class SlippyMap {
  center: { lat: number; lon: number };
  zoom: number;
  bbox: Bounds | null = null;

  onBboxDrawn: ((b: Bounds) => void) | null = null;
  onMarkerClick: ((spotIndex: number) => void) | null = null;

  private readonly tiles: HTMLDivElement;
  private readonly overlay: HTMLDivElement;
  private readonly rect: HTMLDivElement;
  private markers: Marker[] = [];
  private drawing = false;
  private dragStart: { px: number; py: number } | null = null;
  private dragMode: "pan" | "draw" | null = null;

  constructor(private readonly container: HTMLElement,
              private readonly opts: MapOptions) {
    this.center = { ...opts.center };
    this.zoom = opts.zoom;
    container.classList.add("slippy");
    this.tiles = document.createElement("div");
    this.tiles.className = "tile-layer";
    this.overlay = document.createElement("div");
    this.overlay.className = "overlay-layer";
    this.rect = document.createElement("div");
    this.rect.className = "bbox-rect";
    this.rect.hidden = true;
    container.append(this.tiles, this.overlay, this.rect);
    this.bindPointer();
    this.render();
  }

  get width(): number {
    return this.opts.width ?? this.container.clientWidth ?? 0;
  }

  get height(): number {
    return this.opts.height ?? this.container.clientHeight ?? 0;
  }

  /** Container pixel -> lat/lon under the current view. */
  pxToLatLon(px: number, py: number): { lat: number; lon: number } {
    const cx = lonToX(this.center.lon, this.zoom) * TILE;
    const cy = latToY(this.center.lat, this.zoom) * TILE;
    const x = (cx - this.width / 2 + px) / TILE;
    const y = (cy - this.height / 2 + py) / TILE;
    return { lat: yToLat(y, this.zoom), lon: xToLon(x, this.zoom) };
  }

  /** lat/lon -> container pixel under the current view. */
  latLonToPx(lat: number, lon: number): { px: number; py: number } {
    const cx = lonToX(this.center.lon, this.zoom) * TILE;
    const cy = latToY(this.center.lat, this.zoom) * TILE;
    return {
      px: lonToX(lon, this.zoom) * TILE - cx + this.width / 2,
      py: latToY(lat, this.zoom) * TILE - cy + this.height / 2,
    };
  }

  setView(center: { lat: number; lon: number }, zoom: number): void {
    this.center = { ...center };
    this.zoom = Math.max(1, Math.min(19, Math.round(zoom)));
    this.render();
  }

  /** Center and zoom so the bounds fit inside the viewport. */
  fitBounds(b: Bounds): void {
    const center = { lat: (b.minLat + b.maxLat) / 2,
                     lon: (b.minLon + b.maxLon) / 2 };
    for (let z = 19; z >= 1; z--) {
      const w = (lonToX(b.maxLon, z) - lonToX(b.minLon, z)) * TILE;
      const h = (latToY(b.minLat, z) - latToY(b.maxLat, z)) * TILE;
      if (w <= this.width && h <= this.height) {
        this.setView(center, z);
        return;
      }
    }
    this.setView(center, 1);
  }

  setMarkers(markers: Marker[]): void {
    this.markers = markers;
    this.render();
  }

  setBbox(b: Bounds | null): void {
    this.bbox = b;
    this.render();
  }

  /** The next drag draws a rectangle instead of panning. */
  startBboxDraw(): void {
    this.drawing = true;
    this.container.classList.add("drawing");
  }

  render(): void {
    this.renderTiles();
    this.renderMarkers();
    this.renderBbox();
  }

  private renderTiles(): void {
    this.tiles.replaceChildren();
    const n = Math.pow(2, this.zoom);
    const cx = lonToX(this.center.lon, this.zoom);
    const cy = latToY(this.center.lat, this.zoom);
    const x0 = Math.floor(cx - this.width / 2 / TILE);
    const x1 = Math.floor(cx + this.width / 2 / TILE);
    const y0 = Math.max(0, Math.floor(cy - this.height / 2 / TILE));
    const y1 = Math.min(n - 1, Math.floor(cy + this.height / 2 / TILE));
    for (let ty = y0; ty <= y1; ty++) {
      for (let tx = x0; tx <= x1; tx++) {
        const img = document.createElement("img");
        const wrapped = ((tx % n) + n) % n;
        img.src = this.opts.tileUrl
          .replace("{z}", String(this.zoom))
          .replace("{x}", String(wrapped))
          .replace("{y}", String(ty));
        img.className = "tile";
        img.alt = "";
        img.style.left = `${(tx - cx) * TILE + this.width / 2}px`;
        img.style.top = `${(ty - cy) * TILE + this.height / 2}px`;
        this.tiles.append(img);
      }
    }
  }

  private renderMarkers(): void {
    this.overlay.replaceChildren();
    for (const m of this.markers) {
      const el = document.createElement("div");
      el.className = `marker marker-${m.kind}`;
      el.title = m.title;
      el.dataset.spot = String(m.spotIndex);
      const { px, py } = this.latLonToPx(m.lat, m.lon);
      el.style.left = `${px}px`;
      el.style.top = `${py}px`;
      el.addEventListener("click", () => {
        this.onMarkerClick?.(m.spotIndex);
      });
      this.overlay.append(el);
    }
  }

  private renderBbox(): void {
    if (!this.bbox) {
      this.rect.hidden = true;
      return;
    }
    const nw = this.latLonToPx(this.bbox.maxLat, this.bbox.minLon);
    const se = this.latLonToPx(this.bbox.minLat, this.bbox.maxLon);
    this.rect.hidden = false;
    this.rect.style.left = `${nw.px}px`;
    this.rect.style.top = `${nw.py}px`;
    this.rect.style.width = `${se.px - nw.px}px`;
    this.rect.style.height = `${se.py - nw.py}px`;
  }

  private localXY(ev: MouseEvent): { px: number; py: number } {
    const box = this.container.getBoundingClientRect();
    return { px: ev.clientX - box.left, py: ev.clientY - box.top };
  }

  private bindPointer(): void {
    this.container.addEventListener("mousedown", (ev) => {
      this.dragStart = this.localXY(ev);
      this.dragMode = this.drawing ? "draw" : "pan";
    });
    this.container.addEventListener("mousemove", (ev) => {
      if (!this.dragStart) return;
      const here = this.localXY(ev);
      if (this.dragMode === "pan") {
        const dx = here.px - this.dragStart.px;
        const dy = here.py - this.dragStart.py;
        this.dragStart = here;
        const cx = lonToX(this.center.lon, this.zoom) * TILE - dx;
        const cy = latToY(this.center.lat, this.zoom) * TILE - dy;
        this.center = { lat: yToLat(cy / TILE, this.zoom),
                        lon: xToLon(cx / TILE, this.zoom) };
        this.render();
      } else {
        this.previewRect(this.dragStart, here);
      }
    });
    this.container.addEventListener("mouseup", (ev) => {
      if (!this.dragStart) return;
      const start = this.dragStart;
      const end = this.localXY(ev);
      const mode = this.dragMode;
      this.dragStart = null;
      this.dragMode = null;
      if (mode !== "draw") return;
      this.drawing = false;
      this.container.classList.remove("drawing");
      const bounds = normalizeBounds(this.pxToLatLon(start.px, start.py),
                                     this.pxToLatLon(end.px, end.py));
      this.setBbox(bounds);
      this.onBboxDrawn?.(bounds);
    });
    this.container.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.setView(this.center, this.zoom + (ev.deltaY < 0 ? 1 : -1));
    });
  }

  private previewRect(a: { px: number; py: number },
                      b: { px: number; py: number }): void {
    this.rect.hidden = false;
    this.rect.style.left = `${Math.min(a.px, b.px)}px`;
    this.rect.style.top = `${Math.min(a.py, b.py)}px`;
    this.rect.style.width = `${Math.abs(b.px - a.px)}px`;
    this.rect.style.height = `${Math.abs(b.py - a.py)}px`;
  }
}
