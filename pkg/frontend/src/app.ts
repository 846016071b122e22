import { ApiClient } from "./api.js";
import { SlippyMap, type Marker } from "./map.js";
import { Store, groupSpots, spotCount, type UiState } from "./state.js";
import type { AppConfig } from "./types.js";

/** The trailing "in <prefix>" of a query, if the user is typing one. */
export function parseAreaPrefix(text: string): string | null {
  const m = /(?:^|\s)in\s+(\S[^,]*)$/i.exec(text);
  return m ? m[1] : null;
}

/** Replace the trailing "in <partial>" with the chosen area name. */
export function completeArea(text: string, name: string): string {
  return text.replace(/((?:^|\s)in\s+)\S[^,]*$/i, `$1${name}`);
}

/** Download payload for the last response: the spots collection verbatim. */
export function geoJsonDownload(state: UiState):
    { filename: string; text: string } | null {
  if (!state.response) return null;
  return { filename: "spots.geojson",
           text: JSON.stringify(state.response.spots) };
}

export class App {
  readonly store = new Store();
  readonly api: ApiClient;
  readonly map: SlippyMap;

  private readonly queryInput: HTMLInputElement;
  private readonly submitButton: HTMLButtonElement;
  private readonly suggestions: HTMLUListElement;
  private readonly banner: HTMLDivElement;
  private readonly statsLine: HTMLDivElement;
  private readonly spotList: HTMLOListElement;
  private readonly imrText: HTMLPreElement;
  private readonly bboxCoords: HTMLSpanElement;
  private readonly clearBbox: HTMLButtonElement;
  private readonly downloadButton: HTMLButtonElement;
  private suggestSeq = 0;

  constructor(root: HTMLElement, config: AppConfig,
              mapSize?: { width: number; height: number }) {
    this.api = new ApiClient(config.apiBaseUrl);
    root.innerHTML = `
      <header class="topbar">
        <form id="search-form">
          <input id="query" type="text" autocomplete="off"
                 placeholder="e.g. Find a restaurant within 200 m of a fountain in Bonn" />
          <button id="submit" type="submit" disabled>Search</button>
        </form>
        <ul id="suggestions" hidden></ul>
        <div class="bbox-controls">
          <button id="draw-bbox" type="button">Draw bbox</button>
          <span id="bbox-coords"></span>
          <button id="clear-bbox" type="button" hidden>Clear</button>
          <button id="download" type="button" disabled>GeoJSON</button>
        </div>
      </header>
      <div id="banner" role="alert" hidden></div>
      <main>
        <div id="map"></div>
        <aside id="sidebar">
          <div id="stats"></div>
          <ol id="spot-list"></ol>
          <details id="inspector">
            <summary>IMR</summary>
            <pre id="imr-text"></pre>
          </details>
        </aside>
      </main>
      <footer id="attribution"></footer>`;

    this.queryInput = root.querySelector("#query")!;
    this.submitButton = root.querySelector("#submit")!;
    this.suggestions = root.querySelector("#suggestions")!;
    this.banner = root.querySelector("#banner")!;
    this.statsLine = root.querySelector("#stats")!;
    this.spotList = root.querySelector("#spot-list")!;
    this.imrText = root.querySelector("#imr-text")!;
    this.bboxCoords = root.querySelector("#bbox-coords")!;
    this.clearBbox = root.querySelector("#clear-bbox")!;
    this.downloadButton = root.querySelector("#download")!;
    root.querySelector<HTMLElement>("#attribution")!.textContent =
      config.attribution;

    this.map = new SlippyMap(root.querySelector("#map")!, {
      tileUrl: config.tileUrl,
      center: { lat: 50.73, lon: 7.10 },
      zoom: 13,
      ...mapSize,
    });
    this.map.onBboxDrawn = (b) => this.store.setBbox(b);
    this.map.onMarkerClick = (i) => this.store.selectSpot(i);

    this.bindEvents(root);
    this.store.subscribe((s) => this.render(s));
    this.render(this.store.state);
  }

  private bindEvents(root: HTMLElement): void {
    root.querySelector("#search-form")!.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitSearch();
    });
    this.queryInput.addEventListener("input", () => {
      this.store.setQuery(this.queryInput.value);
      void this.refreshSuggestions();
    });
    root.querySelector("#draw-bbox")!.addEventListener("click", () => {
      this.map.startBboxDraw();
    });
    root.querySelector("#clear-bbox")!.addEventListener("click", () => {
      this.store.setBbox(null);
    });
    root.querySelector("#download")!.addEventListener("click", () => {
      this.triggerDownload();
    });
  }

  /** The form's code path; exposed so tests can await the round trip. */
  async submitSearch(): Promise<void> {
    if (!this.store.canSubmit()) return;
    this.suggestions.hidden = true;
    await this.store.submit(this.api);
  }

  async refreshSuggestions(): Promise<void> {
    const prefix = parseAreaPrefix(this.store.state.queryText);
    if (!prefix) {
      this.suggestions.hidden = true;
      this.suggestions.replaceChildren();
      return;
    }
    const mySeq = ++this.suggestSeq;
    let names: string[];
    try {
      names = await this.api.areas(prefix);
    } catch {
      return; // suggestions are best-effort
    }
    if (mySeq !== this.suggestSeq) return;
    this.suggestions.replaceChildren(...names.map((name) => {
      const li = document.createElement("li");
      li.textContent = name;
      li.addEventListener("mousedown", () => {
        const text = completeArea(this.store.state.queryText, name);
        this.store.setQuery(text);
        this.suggestions.hidden = true;
      });
      return li;
    }));
    this.suggestions.hidden = names.length === 0;
  }

  private triggerDownload(): void {
    const payload = geoJsonDownload(this.store.state);
    if (!payload || typeof URL.createObjectURL !== "function") return;
    const blob = new Blob([payload.text], { type: "application/geo+json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = payload.filename;
    a.click();
    URL.revokeObjectURL(a.href);
  }

  private render(s: UiState): void {
    this.submitButton.disabled = !this.store.canSubmit();
    if (this.queryInput.value !== s.queryText) {
      this.queryInput.value = s.queryText;
    }

    this.banner.hidden = s.banner === null;
    this.banner.textContent = s.banner ?? "";

    this.bboxCoords.textContent = s.bbox
      ? `${s.bbox.minLon.toFixed(4)},${s.bbox.minLat.toFixed(4)} to ` +
        `${s.bbox.maxLon.toFixed(4)},${s.bbox.maxLat.toFixed(4)}`
      : "";
    this.clearBbox.hidden = !s.bbox;
    this.map.setBbox(s.bbox);
    this.downloadButton.disabled = !s.response;

    if (!s.response) {
      this.statsLine.textContent = "";
      this.spotList.replaceChildren();
      this.imrText.textContent = "";
      this.map.setMarkers([]);
      return;
    }

    const spots = groupSpots(s.response);
    this.statsLine.textContent =
      `${spotCount(s.response)} spots, ` +
      `${s.response.stats.examinedPairs} pairs examined, ` +
      `${s.response.stats.elapsedMs} ms`;

    this.spotList.replaceChildren(...spots.map((spot, i) => {
      const li = document.createElement("li");
      const members = spot.members
        .map((m) => `${m.nodeName} (${m.uid})`).join(", ");
      li.textContent = `${members} - span ${spot.spanM.toFixed(1)} m`;
      li.className = s.selectedSpot === i ? "selected" : "";
      li.addEventListener("click", () => this.store.selectSpot(i));
      return li;
    }));

    this.imrText.textContent = JSON.stringify(s.response.imr, null, 2);

    const markers: Marker[] = [];
    for (const spot of spots) {
      for (const m of spot.members) {
        markers.push({ lat: m.lat, lon: m.lon, kind: "member",
                       title: `${m.nodeName} (${m.uid})`,
                       spotIndex: spot.index });
      }
      markers.push({ lat: spot.center.lat, lon: spot.center.lon,
                     kind: "center",
                     title: `spot ${spot.index}: span ${spot.spanM.toFixed(1)} m`,
                     spotIndex: spot.index });
    }
    this.map.setMarkers(markers);
  }
}
