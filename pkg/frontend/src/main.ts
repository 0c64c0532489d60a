/**
 * DOM wiring for the single-page flow: pin drop -> mask editor -> variant
 * gallery with ratings -> questionnaire. Pure rendering over the controller
 * and form models; all state changes go through them. The editor shows the
 * photo the user just uploaded (kept locally as a blob), so no extra image
 * download is needed.
 */

import { ApiClient, JobView } from "./api.js";
import { EditorController } from "./editor.js";
import { QuestionnaireForm, RatingWidget, SCALE_ITEMS } from "./feedback.js";
import { markersFor, renderOverlayToCanvas } from "./overlay.js";
import { PinDropForm } from "./pin.js";

const API_BASE = (window as { RECITYGEN_API?: string }).RECITYGEN_API ?? "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function show(screen: "pin" | "editor" | "gallery"): void {
  for (const name of ["pin", "editor", "gallery"] as const) {
    el<HTMLElement>(`screen-${name}`).hidden = name !== screen;
  }
}

function toast(message: string): void {
  const box = el<HTMLElement>("toast");
  box.textContent = message;
  box.hidden = false;
  setTimeout(() => {
    box.hidden = true;
  }, 4000);
}

function loadImageSize(blob: Blob): Promise<{ width: number; height: number }> {
  return new Promise((resolve, reject) => {
    const url = URL.createObjectURL(blob);
    const probe = new Image();
    probe.onload = () => {
      URL.revokeObjectURL(url);
      resolve({ width: probe.naturalWidth, height: probe.naturalHeight });
    };
    probe.onerror = () => {
      URL.revokeObjectURL(url);
      reject(new Error("could not read the photo"));
    };
    probe.src = url;
  });
}

export function boot(): void {
  const api = new ApiClient(API_BASE);
  const pinForm = new PinDropForm();
  let editor: EditorController | null = null;
  let entryId = "";

  // ------------------------------------------------------------ pin drop
  const latInput = el<HTMLInputElement>("lat");
  const lonInput = el<HTMLInputElement>("lon");
  const mapBox = el<HTMLDivElement>("map");

  mapBox.addEventListener("click", (event) => {
    const rect = mapBox.getBoundingClientRect();
    pinForm.dropPinAt(
      (event.clientX - rect.left) / rect.width,
      (event.clientY - rect.top) / rect.height,
    );
    latInput.value = pinForm.lat!.toFixed(5);
    lonInput.value = pinForm.lon!.toFixed(5);
    el<HTMLElement>("pin-error").textContent = pinForm.error ?? "";
  });

  const syncTypedLocation = () => {
    pinForm.setLocation(parseFloat(latInput.value), parseFloat(lonInput.value));
    el<HTMLElement>("pin-error").textContent = pinForm.error ?? "";
  };
  latInput.addEventListener("change", syncTypedLocation);
  lonInput.addEventListener("change", syncTypedLocation);

  el<HTMLInputElement>("photo").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    if (input.files && input.files[0]) pinForm.attachPhoto(input.files[0]);
  });

  el<HTMLButtonElement>("create-entry").addEventListener("click", async () => {
    pinForm.note = el<HTMLTextAreaElement>("note").value;
    const created = await pinForm.submit(api);
    el<HTMLElement>("pin-error").textContent = pinForm.error ?? "";
    if (!created) return;
    entryId = created.entry_id;
    try {
      await openEditor(pinForm.photo!);
    } catch (err) {
      toast(err instanceof Error ? err.message : "could not open the editor");
    }
  });

  // -------------------------------------------------------------- editor
  const photoImg = el<HTMLImageElement>("editor-photo");
  const overlayCanvas = el<HTMLCanvasElement>("editor-overlay");
  const markerLayer = el<HTMLDivElement>("editor-markers");

  async function openEditor(photo: Blob): Promise<void> {
    const size = await loadImageSize(photo);
    photoImg.src = URL.createObjectURL(photo);
    editor = new EditorController(api, entryId, size.width, size.height);
    await editor.open();
    redrawOverlay();
    show("editor");
  }

  function redrawOverlay(): void {
    if (!editor || !editor.session) return;
    renderOverlayToCanvas(
      overlayCanvas,
      editor.selectedOverlayBits(),
      editor.imageWidth,
      editor.imageHeight,
    );
    markerLayer.innerHTML = "";
    const rect = photoImg.getBoundingClientRect();
    for (const marker of markersFor(
      editor.session.clicks,
      rect.width || editor.imageWidth,
      rect.height || editor.imageHeight,
      editor.imageWidth,
      editor.imageHeight,
    )) {
      const dot = document.createElement("span");
      dot.className = `marker marker-${marker.polarity}`;
      dot.textContent = marker.symbol;
      dot.style.left = `${marker.displayX}px`;
      dot.style.top = `${marker.displayY}px`;
      markerLayer.appendChild(dot);
    }
    const switcher = el<HTMLElement>("candidates");
    switcher.innerHTML = "";
    editor.session.candidates.forEach((candidate, index) => {
      const button = document.createElement("button");
      button.textContent = `candidate ${index + 1} (${candidate.score.toFixed(2)})`;
      button.disabled = index === editor!.session!.selected;
      button.addEventListener("click", async () => {
        await editor!.selectCandidate(index);
        redrawOverlay();
      });
      switcher.appendChild(button);
    });
  }

  overlayCanvas.addEventListener("click", async (event) => {
    if (!editor) return;
    const rect = overlayCanvas.getBoundingClientRect();
    try {
      await editor.clickAtDisplay(
        event.clientX - rect.left,
        event.clientY - rect.top,
        rect.width || editor.imageWidth,
        rect.height || editor.imageHeight,
      );
      redrawOverlay();
    } catch (err) {
      // failed click: overlay stays as it was
      toast(err instanceof Error ? err.message : "segmentation failed");
    }
  });

  el<HTMLButtonElement>("mode-toggle").addEventListener("click", () => {
    if (!editor) return;
    el<HTMLButtonElement>("mode-toggle").textContent =
      editor.toggleMode() === "include" ? "+ include" : "- exclude";
  });

  el<HTMLButtonElement>("undo").addEventListener("click", async () => {
    if (!editor) return;
    try {
      await editor.undo();
      redrawOverlay();
    } catch {
      toast("nothing to undo");
    }
  });

  el<HTMLButtonElement>("generate").addEventListener("click", async () => {
    if (!editor) return;
    const prompt = el<HTMLInputElement>("prompt").value;
    try {
      await editor.generate(prompt);
      const job = await editor.waitForJob();
      if (job.state === "failed") {
        toast(`generation failed: ${job.reason ?? "unknown"}`);
        return;
      }
      renderGallery(job);
    } catch (err) {
      toast(err instanceof Error ? err.message : "generation failed");
    }
  });

  // ------------------------------------------------------------- gallery
  function renderGallery(job: JobView): void {
    const gallery = el<HTMLElement>("variants");
    gallery.innerHTML = "";
    for (const variantId of job.variant_ids) {
      const card = document.createElement("figure");
      const img = document.createElement("img");
      img.src = api.variantImageUrl(variantId);
      img.alt = "generated street redesign";
      card.appendChild(img);
      const widget = new RatingWidget(variantId);
      const stars = document.createElement("div");
      stars.className = "stars";
      for (let score = 1; score <= 5; score++) {
        const star = document.createElement("button");
        star.textContent = "★";
        star.addEventListener("click", async () => {
          if (await widget.submit(api, score)) {
            stars.querySelectorAll("button").forEach((b) => (b.disabled = true));
          }
        });
        stars.appendChild(star);
      }
      card.appendChild(stars);
      gallery.appendChild(card);
    }
    renderQuestionnaire();
    show("gallery");
  }

  // ------------------------------------------------------- questionnaire
  function renderQuestionnaire(): void {
    const form = new QuestionnaireForm();
    const host = el<HTMLElement>("questionnaire");
    host.innerHTML = "";
    const submit = el<HTMLButtonElement>("submit-questionnaire");
    submit.disabled = true;

    for (const item of SCALE_ITEMS) {
      const row = document.createElement("label");
      row.textContent = item.label;
      const select = document.createElement("select");
      select.appendChild(new Option("-", ""));
      for (let score = 1; score <= 5; score++) {
        select.appendChild(new Option(String(score), String(score)));
      }
      select.addEventListener("change", () => {
        if (select.value) form.setAnswer(item.key, Number(select.value));
        submit.disabled = !form.isComplete();
      });
      row.appendChild(select);
      host.appendChild(row);
    }

    const demographics: Array<[string, (value: string) => void]> = [
      ["gender", (v) => (form.gender = v)],
      ["education", (v) => (form.education = v)],
      ["birth year", (v) => (form.birthYear = v)],
      ["profession", (v) => (form.profession = v)],
      ["design background", (v) => (form.designBackground = v)],
      ["suggestions", (v) => (form.openFeedback = v)],
    ];
    for (const [label, assign] of demographics) {
      const row = document.createElement("label");
      row.textContent = label;
      const input = document.createElement("input");
      input.addEventListener("change", () => assign(input.value));
      row.appendChild(input);
      host.appendChild(row);
    }

    submit.onclick = async () => {
      if (await form.submit(api, entryId)) {
        submit.disabled = true;
        toast("thank you, feedback recorded");
      }
    };
  }

  show("pin");
}

if (typeof document !== "undefined" && document.getElementById("screen-pin")) {
  boot();
}
