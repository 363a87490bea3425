/**
 * Event-selectable hindsight relabeling screen: scrub a recorded episode
 * (served frame images, never re-simulated), mark behavior start/end at the
 * playhead, describe it as a command, and submit. Overlapping segments are
 * allowed; inverted ones are blocked client-side; the server's validation
 * errors are shown verbatim. Drafts persist in localStorage.
 */

export interface EpisodeInfo {
  id: string;
  frames: number;
  control_hz: number;
}

export interface DraftSegment {
  start: number | null;
  end: number | null;
  text: string;
  submitted: boolean;
  error?: string;
}

export const SEGMENT_GUIDELINE = 24;  // 12 short + 12 medium per episode

export class RelabelView {
  readonly root: HTMLElement;
  episode: EpisodeInfo | null = null;
  playhead = 0;
  playing = false;
  speed = 1.0;
  pendingStart: number | null = null;
  segments: DraftSegment[] = [];

  private picker!: HTMLSelectElement;
  private scrubber!: HTMLInputElement;
  private frameImg!: HTMLImageElement;
  private frameLabel!: HTMLElement;
  private segmentList!: HTMLElement;
  private counter!: HTMLElement;
  private warning!: HTMLElement;
  private textInput!: HTMLInputElement;
  private addBtn!: HTMLButtonElement;
  private inlineMsg!: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(root: HTMLElement, readonly baseUrl: string,
              readonly doc: Document = document,
              readonly storage: Storage | null =
                typeof localStorage === "undefined" ? null : localStorage) {
    this.root = root;
    this.build();
  }

  private el(tag: string, cls?: string): HTMLElement {
    const node = this.doc.createElement(tag);
    if (cls) node.className = cls;
    return node;
  }

  private build(): void {
    this.root.innerHTML = "";
    const bar = this.el("div", "toolbar");
    this.picker = this.el("select") as HTMLSelectElement;
    this.picker.id = "episode-picker";
    this.picker.addEventListener("change", () => this.selectEpisode(this.picker.value));
    const refresh = this.el("button") as HTMLButtonElement;
    refresh.textContent = "refresh";
    refresh.addEventListener("click", () => void this.loadEpisodes());
    bar.append("episode: ", this.picker, refresh);

    const stage = this.el("div", "stage");
    this.frameImg = this.doc.createElement("img") as HTMLImageElement;
    this.frameImg.id = "frame-image";
    this.frameImg.width = 640;
    this.frameLabel = this.el("div", "frame-label");
    stage.append(this.frameImg, this.frameLabel);

    const controls = this.el("div", "controls");
    this.scrubber = this.el("input") as HTMLInputElement;
    this.scrubber.type = "range";
    this.scrubber.id = "scrubber";
    this.scrubber.min = "0";
    this.scrubber.addEventListener("input", () => {
      this.seek(Number(this.scrubber.value));
    });
    const playBtn = this.el("button") as HTMLButtonElement;
    playBtn.id = "play-pause";
    playBtn.textContent = "play";
    playBtn.addEventListener("click", () => {
      this.playing ? this.pause() : this.play();
      playBtn.textContent = this.playing ? "pause" : "play";
    });
    const speedSel = this.el("select") as HTMLSelectElement;
    for (const s of ["0.5", "1", "2", "4"]) {
      const opt = this.doc.createElement("option");
      opt.value = s;
      opt.textContent = `${s}x`;
      if (s === "1") opt.selected = true;
      speedSel.appendChild(opt);
    }
    speedSel.addEventListener("change", () => {
      this.speed = Number(speedSel.value);
      if (this.playing) { this.pause(); this.play(); }
    });
    controls.append(playBtn, this.scrubber, speedSel);

    const marker = this.el("div", "marker-row");
    const startBtn = this.el("button") as HTMLButtonElement;
    startBtn.id = "mark-start";
    startBtn.textContent = "mark start";
    startBtn.addEventListener("click", () => this.markStart());
    const endBtn = this.el("button") as HTMLButtonElement;
    endBtn.id = "mark-end";
    endBtn.textContent = "mark end";
    endBtn.addEventListener("click", () => this.markEnd());
    this.textInput = this.el("input") as HTMLInputElement;
    this.textInput.id = "segment-text";
    this.textInput.placeholder = "describe the behavior as a command";
    this.addBtn = this.el("button") as HTMLButtonElement;
    this.addBtn.id = "add-segment";
    this.addBtn.textContent = "add segment";
    this.addBtn.addEventListener("click", () => this.addSegment());
    this.inlineMsg = this.el("span", "inline-msg");
    marker.append(startBtn, endBtn, this.textInput, this.addBtn, this.inlineMsg);

    this.counter = this.el("div", "segment-counter");
    this.warning = this.el("div", "segment-warning");
    this.segmentList = this.el("ul", "segment-list");
    this.segmentList.id = "segment-list";

    this.root.append(bar, stage, controls, marker, this.counter, this.warning,
                     this.segmentList);
    void this.loadEpisodes();
  }

  async loadEpisodes(): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/episodes`);
    const body = await resp.json();
    this.picker.innerHTML = "";
    for (const ep of body.episodes as (EpisodeInfo & { demos: number })[]) {
      const opt = this.doc.createElement("option");
      opt.value = ep.id;
      opt.textContent = `${ep.id} (${ep.frames} frames, ${ep.demos} demos)`;
      this.picker.appendChild(opt);
    }
    if (body.episodes.length && !this.episode) {
      await this.selectEpisode(body.episodes[0].id);
    }
  }

  async selectEpisode(id: string): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/episodes/${id}`);
    if (!resp.ok) return;
    this.episode = await resp.json() as EpisodeInfo;
    this.scrubber.max = String(this.episode.frames - 1);
    this.pendingStart = null;
    this.segments = this.loadDrafts();
    this.seek(0);
    this.renderSegments();
  }

  /** Scrubbing uses served renders of the recorded states. */
  frameUrl(frame: number): string {
    return `${this.baseUrl}/episodes/${this.episode?.id}/frames/${frame}/image.png`;
  }

  seek(frame: number): void {
    if (!this.episode) return;
    this.playhead = Math.max(0, Math.min(frame, this.episode.frames - 1));
    this.scrubber.value = String(this.playhead);
    this.frameImg.src = this.frameUrl(this.playhead);
    const seconds = (this.playhead / this.episode.control_hz).toFixed(1);
    this.frameLabel.textContent = `frame ${this.playhead} / ${this.episode.frames - 1}  (${seconds}s)`;
  }

  play(): void {
    if (!this.episode || this.playing) return;
    this.playing = true;
    const interval = 1000 / (this.episode.control_hz * this.speed);
    this.timer = setInterval(() => {
      if (!this.episode) return;
      if (this.playhead >= this.episode.frames - 1) {
        this.pause();
        return;
      }
      this.seek(this.playhead + 1);
    }, interval);
  }

  pause(): void {
    this.playing = false;
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  markStart(): void {
    this.pendingStart = this.playhead;
    this.inlineMsg.textContent = `start marked at ${this.playhead}`;
    this.refreshAddState();
  }

  markEnd(): void {
    if (this.pendingStart === null) {
      this.inlineMsg.textContent = "mark a start frame first";
      return;
    }
    if (this.playhead <= this.pendingStart) {
      // Inverted marks are blocked client-side.
      this.inlineMsg.textContent = "end must come after start";
      this.refreshAddState();
      return;
    }
    this.inlineMsg.textContent = `segment ${this.pendingStart} → ${this.playhead}`;
    this.refreshAddState();
  }

  segmentValid(): boolean {
    return this.pendingStart !== null && this.playhead > this.pendingStart
      && this.textInput.value.trim().length > 0;
  }

  private refreshAddState(): void {
    this.addBtn.disabled = !this.segmentValid();
  }

  addSegment(): void {
    if (!this.segmentValid()) {
      this.inlineMsg.textContent = "need start < end and a description";
      return;
    }
    this.segments.push({
      start: this.pendingStart, end: this.playhead,
      text: this.textInput.value.trim(), submitted: false,
    });
    this.pendingStart = null;
    this.textInput.value = "";
    this.saveDrafts();
    this.renderSegments();
  }

  async submitSegment(index: number): Promise<void> {
    const seg = this.segments[index];
    if (!this.episode || seg.submitted) return;
    const resp = await fetch(`${this.baseUrl}/episodes/${this.episode.id}/relabels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ start: seg.start, end: seg.end, instruction: seg.text }),
    });
    if (resp.ok) {
      seg.submitted = true;
      seg.error = undefined;
    } else {
      const body = await resp.json();
      seg.error = String(body.error ?? resp.status);  // server text, verbatim
    }
    this.saveDrafts();
    this.renderSegments();
  }

  renderSegments(): void {
    this.segmentList.innerHTML = "";
    this.segments.forEach((seg, i) => {
      const item = this.el("li", seg.submitted ? "segment submitted" : "segment");
      item.textContent = `[${seg.start}, ${seg.end}] "${seg.text}"`
        + (seg.submitted ? " ✓" : "") + (seg.error ? ` — ${seg.error}` : "");
      if (!seg.submitted) {
        const btn = this.el("button") as HTMLButtonElement;
        btn.textContent = "submit";
        btn.className = "submit-segment";
        btn.addEventListener("click", () => void this.submitSegment(i));
        item.appendChild(btn);
      }
      this.segmentList.appendChild(item);
    });
    this.counter.textContent = `${this.segments.length}/${SEGMENT_GUIDELINE} segments`;
    this.warning.textContent = this.segments.length > SEGMENT_GUIDELINE
      ? `over the ${SEGMENT_GUIDELINE}-segment guideline (12 short + 12 medium)`
      : "";
    this.refreshAddState();
  }

  private draftsKey(): string {
    return `langboard-drafts-${this.episode?.id}`;
  }

  private saveDrafts(): void {
    this.storage?.setItem(this.draftsKey(), JSON.stringify(this.segments));
  }

  private loadDrafts(): DraftSegment[] {
    const raw = this.storage?.getItem(this.draftsKey());
    if (!raw) return [];
    try {
      return JSON.parse(raw) as DraftSegment[];
    } catch {
      return [];
    }
  }
}
