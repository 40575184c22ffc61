/**
 * Bootstrap: with ?session=<id> in the URL the query screen drives that
 * session; without one, a small setup form uploads a dataset and tree files
 * and starts a fresh session. Keyboard: S = same, D = different, U = undo.
 */

import { Answer, ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { renderState } from "./view.js";

const api = new ApiClient("");
const root = document.getElementById("app")!;

function sessionIdFromUrl(): string | null {
  return new URLSearchParams(window.location.search).get("session");
}

async function bootSession(sessionId: string): Promise<void> {
  // sessions carry per-unit session numbers in each query payload; the
  // completion cards need unit -> recording session, collected as we go
  const sessionOf = new Map<number, number>();
  const exportUrl = api.exportUrl(sessionId);
  const controller = new SessionController(api, sessionId, (state) => {
    if (state.query) {
      sessionOf.set(state.query.a.unit_id, state.query.a.session);
      sessionOf.set(state.query.b.unit_id, state.query.b.session);
    }
    root.innerHTML = renderState(state, sessionOf, exportUrl);
    document.getElementById("btn-same")?.addEventListener("click", () => controller.answer("same"));
    document.getElementById("btn-diff")?.addEventListener("click", () => controller.answer("different"));
    document.getElementById("btn-undo")?.addEventListener("click", () => controller.undo());
  });

  document.addEventListener("keydown", (event) => {
    if (event.repeat || event.altKey || event.ctrlKey || event.metaKey) {
      return;
    }
    const target = event.target as HTMLElement | null;
    if (target && ("value" in target || target.isContentEditable)) {
      return;
    }
    const key = event.key.toLowerCase();
    const actions: Record<string, () => void> = {
      s: () => void controller.answer("same" as Answer),
      d: () => void controller.answer("different" as Answer),
      u: () => void controller.undo(),
    };
    if (key in actions) {
      event.preventDefault();
      actions[key]!();
    }
  });

  await controller.refresh();
}

function renderSetup(): void {
  root.innerHTML = `
    <div class="setup">
      <h2>Start a curation session</h2>
      <label>Dataset file (csv)
        <input type="file" id="dataset-file" accept=".csv,text/csv" />
      </label>
      <label>Tree files (linkage interchange format, multiple)
        <input type="file" id="tree-files" multiple />
      </label>
      <label>Channels per waveform
        <input type="number" id="channels" value="32" min="1" />
      </label>
      <button id="btn-create" class="btn">Create session</button>
      <div id="setup-status"></div>
    </div>`;
  const status = document.getElementById("setup-status")!;
  document.getElementById("btn-create")!.addEventListener("click", async () => {
    try {
      const datasetInput = document.getElementById("dataset-file") as HTMLInputElement;
      const treesInput = document.getElementById("tree-files") as HTMLInputElement;
      const channelsInput = document.getElementById("channels") as HTMLInputElement;
      if (!datasetInput.files?.length || !treesInput.files?.length) {
        status.textContent = "Choose a dataset file and at least one tree file.";
        return;
      }
      status.textContent = "Uploading…";
      const dataset = await api.uploadDataset(await datasetInput.files[0]!.text());
      const trees = [];
      for (const file of Array.from(treesInput.files)) {
        trees.push({ name: file.name.replace(/\.tree$/, ""), content: await file.text() });
      }
      const ensemble = await api.uploadEnsemble(trees);
      const channels = parseInt(channelsInput.value, 10) || undefined;
      const session = await api.createSession(dataset.dataset_id, ensemble.ensemble_id, {
        channels,
      });
      window.location.search = `?session=${session.session_id}`;
    } catch (err) {
      status.textContent = err instanceof Error ? err.message : String(err);
    }
  });
}

const sessionId = sessionIdFromUrl();
if (sessionId) {
  void bootSession(sessionId);
} else {
  renderSetup();
}
