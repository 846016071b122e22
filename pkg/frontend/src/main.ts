import { App } from "./app.js";
import type { AppConfig } from "./types.js";

async function boot(): Promise<void> {
  const resp = await fetch("./config.json");
  if (!resp.ok) throw new Error(`config.json: HTTP ${resp.status}`);
  const config = (await resp.json()) as AppConfig;
  const root = document.getElementById("root");
  if (!root) throw new Error("missing #root element");
  new App(root, config);
}

void boot();
