/** DOM layer: renders exactly what the service returned, nothing computed. */

import { ApiClient, ApiError, ServiceInfo } from "./api.js";
import { FramePlayer, LatestOnly, Recipe, StudioState } from "./state.js";
import type { MeanResponse, MutateResponse, SpliceResponse } from "./api.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

class PlayerView {
  readonly root = el("div", "player");
  private readonly img = el("img", "player-frame");
  private readonly slider = el("input", "player-slider");
  private readonly label = el("span", "player-label", "-");
  private readonly player = new FramePlayer();

  constructor(title: string) {
    this.root.appendChild(el("h3", "", title));
    this.slider.type = "range";
    this.slider.min = "0";
    this.slider.value = "0";
    this.slider.addEventListener("input", () => {
      const frame = this.player.scrub(Number(this.slider.value));
      if (frame) this.img.src = pngSrc(frame);
      this.updateLabel();
    });
    this.root.append(this.img, this.slider, this.label);
  }

  setFrames(frames: string[]): void {
    this.player.setFrames(frames);
    this.slider.max = String(Math.max(0, frames.length - 1));
    this.slider.value = String(this.player.position);
    const frame = this.player.current();
    if (frame) this.img.src = pngSrc(frame);
    this.updateLabel();
  }

  private updateLabel(): void {
    this.label.textContent = this.player.length
      ? `frame ${this.player.position + 1}/${this.player.length}`
      : "-";
  }
}

export class StudioApp {
  private info: ServiceInfo | null = null;
  private readonly meanPanel = new PlayerView("Mean image");
  private readonly splicePanel = new PlayerView("Spliced growth");
  private readonly mutatePanel = new PlayerView("Mutated growth");
  private readonly meanRequests = new LatestOnly();
  private readonly spliceRequests = new LatestOnly();
  private readonly mutateRequests = new LatestOnly();
  private readonly assertedLabel = el("div", "asserted", "mean: not computed");
  private readonly spliceButton = el("button", "", "Splice into target");
  private readonly banner = el("div", "banner hidden");
  private readonly gallery = el("div", "gallery");
  private readonly historyList = el("ul", "history");
  private tauSelect = el("select");
  private mutateRate = el("input");
  private lastDna: string | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly state: StudioState,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    this.root.append(this.banner);
    try {
      this.info = await this.api.images();
    } catch (e) {
      this.showBanner(`service unreachable: ${(e as Error).message}`, () =>
        this.start(),
      );
      return;
    }
    this.hideBanner();
    this.buildLayout();
    this.renderGallery();
    this.refreshControls();
  }

  private showBanner(message: string, retry: () => void): void {
    this.banner.classList.remove("hidden");
    this.banner.textContent = message + " ";
    const btn = el("button", "", "retry");
    btn.addEventListener("click", retry);
    this.banner.appendChild(btn);
  }

  private hideBanner(): void {
    this.banner.classList.add("hidden");
    this.banner.textContent = "";
  }

  private buildLayout(): void {
    const controls = el("div", "controls");
    const tauLabel = el("label", "", "threshold ");
    for (const t of this.info!.tau_stops) {
      const opt = el("option", "", t.toFixed(2));
      opt.value = String(t);
      this.tauSelect.appendChild(opt);
    }
    this.tauSelect.value = String(this.state.tau);
    this.tauSelect.addEventListener("change", () => {
      this.state.setTau(Number(this.tauSelect.value));
      this.refreshControls();
      void this.computeMean();
    });
    tauLabel.appendChild(this.tauSelect);

    const meanBtn = el("button", "", "Compute mean");
    meanBtn.addEventListener("click", () => void this.computeMean());
    this.spliceButton.addEventListener("click", () => void this.doSplice());

    this.mutateRate.type = "range";
    this.mutateRate.min = "0";
    this.mutateRate.max = "1";
    this.mutateRate.step = "0.05";
    this.mutateRate.value = "0.5";
    const mutateBtn = el("button", "", "Mutate last DNA");
    mutateBtn.addEventListener("click", () => void this.doMutate());

    controls.append(tauLabel, meanBtn, this.assertedLabel, this.spliceButton,
      el("label", "", "mutation rate "), this.mutateRate, mutateBtn);
    const panels = el("div", "panels");
    panels.append(this.meanPanel.root, this.splicePanel.root, this.mutatePanel.root);
    const historyBox = el("div", "history-box");
    historyBox.append(el("h3", "", "Recipe history"), this.historyList);
    this.root.append(this.gallery, controls, panels, historyBox);
  }

  private renderGallery(): void {
    this.gallery.textContent = "";
    for (const item of this.info!.images) {
      const card = el("div", "card");
      const img = el("img");
      img.src = pngSrc(item.png);
      img.title = item.id;
      const srcBtn = el("button", "pick-source", "source");
      const tgtBtn = el("button", "pick-target", "target");
      srcBtn.addEventListener("click", () => {
        this.state.toggleSource(item.id);
        card.classList.toggle("selected-source");
        this.refreshControls();
      });
      tgtBtn.addEventListener("click", () => {
        this.state.setTarget(item.id);
        this.gallery
          .querySelectorAll(".selected-target")
          .forEach((c) => c.classList.remove("selected-target"));
        card.classList.add("selected-target");
        this.refreshControls();
      });
      card.append(img, el("div", "card-id", item.id), srcBtn, tgtBtn);
      this.gallery.appendChild(card);
    }
  }

  refreshControls(): void {
    this.spliceButton.disabled = !this.state.canSplice;
    if (this.state.meanStale) {
      this.assertedLabel.textContent = this.state.canComputeMean
        ? "mean: stale (recompute)"
        : "mean: select sources";
    } else if (this.state.lastMean) {
      const m = this.state.lastMean;
      this.assertedLabel.textContent =
        `asserted ${m.asserted}/${m.total} genes at tau ${m.tau}`;
    }
  }

  async computeMean(): Promise<MeanResponse | null> {
    if (!this.state.canComputeMean) return null;
    const body = this.state.meanRequestBody();
    const result = await this.meanRequests.run(() =>
      this.api.postRaw<MeanResponse>("/mean", body),
    );
    if (result) {
      this.state.applyMean(result);
      this.meanPanel.setFrames(result.frames);
      this.refreshControls();
    }
    return result;
  }

  async doSplice(): Promise<SpliceResponse | null> {
    if (!this.state.canSplice) return null;
    const body = this.state.spliceRequestBody();
    const result = await this.spliceRequests.run(() =>
      this.api.postRaw<SpliceResponse>("/splice", body),
    );
    if (result) {
      const recipe = this.state.recordSplice(body, result);
      this.lastDna = result.dna;
      this.splicePanel.setFrames(result.frames);
      this.appendHistory(recipe);
      this.refreshControls();
    }
    return result;
  }

  async replayRecipe(recipe: Recipe): Promise<SpliceResponse | null> {
    const result = await this.spliceRequests.run(() =>
      this.api.postRaw<SpliceResponse>("/splice", recipe.bodyJson),
    );
    if (result) {
      this.lastDna = result.dna;
      this.splicePanel.setFrames(result.frames);
    }
    return result;
  }

  private appendHistory(recipe: Recipe): void {
    const item = el("li");
    item.textContent =
      `[${recipe.sourceIds.join(",")}] tau=${recipe.tau} -> ${recipe.targetId} `;
    const replay = el("button", "", "replay");
    replay.addEventListener("click", () => void this.replayRecipe(recipe));
    const fork = el("button", "", "fork");
    fork.addEventListener("click", () => {
      this.state.loadRecipe(recipe);
      this.tauSelect.value = String(recipe.tau);
      this.refreshControls();
    });
    item.append(replay, fork);
    this.historyList.appendChild(item);
  }

  async doMutate(): Promise<MutateResponse | null> {
    if (!this.lastDna) return null;
    const dna = this.lastDna;
    const rate = Number(this.mutateRate.value);
    const result = await this.mutateRequests.run(() =>
      this.api.mutate({ dna, rate, seed: this.state.seed }),
    );
    if (result) this.mutatePanel.setFrames(result.frames);
    return result;
  }
}

export { ApiClient, ApiError, StudioState };
