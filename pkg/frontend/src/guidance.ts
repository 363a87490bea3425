/**
 * Real-time guidance screen: a grid of live boards, one instruction box per
 * session plus a broadcast box, and a tick-stamped instruction log. Every
 * user action maps to exactly one protocol message.
 */

import { BoardRenderer } from "./board.js";
import { GuidanceSocket } from "./client.js";
import { SessionMode, ServerMsg, SnapshotMsg } from "./protocol.js";

interface BoardPanel {
  session: string;
  renderer: BoardRenderer;
  banner: HTMLElement;
  status: HTMLElement;
  logList: HTMLElement;
  lastTick: number;
}

export class GuidanceView {
  readonly root: HTMLElement;
  readonly panels = new Map<string, BoardPanel>();
  private grid: HTMLElement;
  private connBadge: HTMLElement;
  private broadcastInput: HTMLInputElement;

  constructor(root: HTMLElement, readonly socket: GuidanceSocket,
              readonly doc: Document = document) {
    this.root = root;
    root.innerHTML = "";

    const bar = this.el("div", "toolbar");
    this.connBadge = this.el("span", "conn-badge");
    this.connBadge.textContent = socket.connected ? "connected" : "disconnected";
    bar.appendChild(this.connBadge);

    const seedInput = this.el("input") as HTMLInputElement;
    seedInput.type = "number";
    seedInput.value = "0";
    seedInput.id = "seed-input";
    const modeSelect = this.el("select") as HTMLSelectElement;
    for (const mode of ["realtime", "open_loop"]) {
      const opt = this.doc.createElement("option");
      opt.value = mode;
      opt.textContent = mode;
      modeSelect.appendChild(opt);
    }
    const addBtn = this.el("button") as HTMLButtonElement;
    addBtn.id = "add-session";
    addBtn.textContent = "add board";
    addBtn.addEventListener("click", () => {
      this.socket.send({
        type: "create", mode: modeSelect.value as SessionMode,
        checkpoint: "expert", seed: Number(seedInput.value || "0"),
      });
    });
    bar.append(" seed: ", seedInput, " mode: ", modeSelect, addBtn);

    this.broadcastInput = this.el("input") as HTMLInputElement;
    this.broadcastInput.id = "broadcast-input";
    this.broadcastInput.placeholder = "broadcast to all boards…";
    this.broadcastInput.addEventListener("keydown", (e: KeyboardEvent) => {
      if (e.key === "Enter") this.broadcast();
    });
    bar.appendChild(this.broadcastInput);

    this.grid = this.el("div", "board-grid");
    root.append(bar, this.grid);

    socket.onStatus((ok) => {
      this.connBadge.textContent = ok ? "connected" : "disconnected";
      this.connBadge.className = ok ? "conn-badge ok" : "conn-badge bad";
    });
    socket.onMessage((msg) => this.handle(msg));
  }

  private el(tag: string, cls?: string): HTMLElement {
    const node = this.doc.createElement(tag);
    if (cls) node.className = cls;
    return node;
  }

  broadcast(): void {
    const text = this.broadcastInput.value.trim();
    if (!text) return;
    for (const session of this.panels.keys()) {
      this.sendInstruction(session, text);
    }
    this.broadcastInput.value = "";
  }

  sendInstruction(session: string, text: string): void {
    const record = this.socket.send({ type: "instruction", session, text });
    const panel = this.panels.get(session);
    if (!panel) return;
    const item = this.el("li", "log-entry pending");
    item.textContent = `[tick ${panel.lastTick}] ${text}`;
    panel.logList.prepend(item);
    const settle = () => {
      if (record.acked) {
        item.className = "log-entry acked";
      } else if (record.failed) {
        item.className = "log-entry failed";
        item.textContent += "  (unacknowledged)";
      } else {
        setTimeout(settle, 200);
      }
    };
    setTimeout(settle, 200);
  }

  private addPanel(session: string): BoardPanel {
    const cell = this.el("div", "board-cell");
    cell.id = `board-${session}`;
    const canvas = this.doc.createElement("canvas") as HTMLCanvasElement;
    canvas.width = 480;
    canvas.height = 380;
    const banner = this.el("div", "instruction-banner");
    banner.textContent = "(no instruction yet)";
    const status = this.el("div", "session-status");
    status.textContent = `${session} · tick 0`;
    const input = this.el("input") as HTMLInputElement;
    input.className = "instruction-input";
    input.placeholder = "type an instruction and press enter";
    input.addEventListener("keydown", (e: KeyboardEvent) => {
      if (e.key === "Enter" && input.value.trim()) {
        this.sendInstruction(session, input.value.trim());
        input.value = "";
      }
    });
    const logList = this.el("ul", "instruction-log");
    cell.append(status, canvas, banner, input, logList);
    this.grid.appendChild(cell);
    const panel: BoardPanel = {
      session, renderer: new BoardRenderer(canvas), banner, status, logList,
      lastTick: 0,
    };
    this.panels.set(session, panel);
    return panel;
  }

  private handle(msg: ServerMsg): void {
    if (msg.type === "created") {
      this.addPanel(msg.session);
      this.socket.subscribe(msg.session);
      return;
    }
    if (msg.type === "snapshot") {
      let panel = this.panels.get(msg.session);
      if (!panel) panel = this.addPanel(msg.session);
      this.applySnapshot(panel, msg);
    }
  }

  private applySnapshot(panel: BoardPanel, snap: SnapshotMsg): void {
    panel.lastTick = snap.tick;
    panel.renderer.draw(snap);
    panel.banner.textContent = snap.instruction || "(no instruction yet)";
    const badge = snap.done ? " ✓ done" : snap.status === "paused" ? " ⏸ paused" : "";
    panel.status.textContent = `${panel.session} · tick ${snap.tick}${badge}`;
  }
}
