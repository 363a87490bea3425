// End-to-end round-trips against a live guidance service (spawned uvicorn).
// DOM driven through happy-dom; the socket is the real network client.
// @vitest-environment happy-dom

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import NodeWebSocket from "ws";

import { GuidanceSocket } from "../src/client.js";
import { GuidanceView } from "../src/guidance.js";
import { RelabelView } from "../src/relabel.js";
import { AckMsg, SnapshotMsg } from "../src/protocol.js";

let proc: ChildProcess;
let baseUrl = "";
let wsUrl = "";

beforeAll(async () => {
  proc = spawn("python3", ["tests/serve_for_tests.py"],
               { stdio: ["ignore", "pipe", "pipe"] });
  proc.stderr!.on("data", (chunk: Buffer) => {
    console.error("[service]", chunk.toString().trim());
  });
  const port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("service did not start")), 60_000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      const m = /READY (\d+)/.exec(chunk.toString());
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
  });
  baseUrl = `http://127.0.0.1:${port}`;
  wsUrl = `ws://127.0.0.1:${port}/ws`;
  // happy-dom enforces same-origin on fetch; point the window at the service.
  const happy = (globalThis as { happyDOM?: { setURL?: (u: string) => void } }).happyDOM;
  happy?.setURL?.(baseUrl);
}, 70_000);

afterAll(() => {
  proc?.kill();
});

function liveSocket(): GuidanceSocket {
  return new GuidanceSocket(wsUrl, {
    socketFactory: (url) => new NodeWebSocket(url) as unknown as WebSocket,
  });
}

describe("live service round-trips", () => {
  it("an instruction typed in the guidance view reaches the session within one snapshot interval", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const socket = liveSocket();
    const view = new GuidanceView(document.getElementById("app")!, socket);
    const messages: (SnapshotMsg | AckMsg)[] = [];
    socket.onMessage((msg) => {
      if (msg.type === "snapshot" || msg.type === "ack") messages.push(msg);
    });

    (document.getElementById("add-session") as HTMLButtonElement).click();
    await waitFor(() => view.panels.size === 1, 10_000);
    const session = [...view.panels.keys()][0];

    const text = "push the red star to the top left corner";
    const input = document.getElementById(`board-${session}`)!
      .querySelector(".instruction-input") as HTMLInputElement;
    input.value = text;
    input.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter", bubbles: true }));

    await waitFor(() => messages.some((m) => m.type === "ack"), 10_000);
    const ack = messages.find((m) => m.type === "ack") as AckMsg;
    await waitFor(() => messages.some(
      (m) => m.type === "snapshot" && m.instruction === text), 10_000);
    const first = messages.find(
      (m) => m.type === "snapshot" && m.instruction === text) as SnapshotMsg;
    // Accepted at ack.tick; in force one tick later: within one interval.
    expect(first.tick - ack.tick).toBeLessThanOrEqual(1);

    // The service's session listing confirms the log took it.
    const live = await (await fetch(`${baseUrl}/sessions`)).json();
    expect(live.sessions.some(
      (s: { id: string; instruction: string }) =>
        s.id === session && s.instruction === text)).toBe(true);
    socket.close();
  }, 30_000);

  it("a relabel submitted in the annotation view lands in the datastore with exact bounds and text", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const view = new RelabelView(document.getElementById("app")!, baseUrl);
    await waitFor(() => view.episode !== null, 10_000);
    const episodeId = view.episode!.id;

    view.seek(3);
    view.markStart();
    view.seek(17);
    (document.getElementById("segment-text") as HTMLInputElement).value =
      "slide the green star along the edge";
    view.markEnd();
    view.addSegment();
    expect(view.segments.at(-1)).toMatchObject({ start: 3, end: 17 });
    await view.submitSegment(view.segments.length - 1);
    expect(view.segments.at(-1)!.submitted).toBe(true);

    const body = await (await fetch(`${baseUrl}/episodes/${episodeId}/relabels`)).json();
    expect(body.demos.some(
      (d: { start: number; end: number; instruction: string }) =>
        d.start === 3 && d.end === 17
        && d.instruction === "slide the green star along the edge")).toBe(true);
  }, 30_000);

  it("rejected submissions surface the server's validation error verbatim", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const view = new RelabelView(document.getElementById("app")!, baseUrl);
    await waitFor(() => view.episode !== null, 10_000);
    view.segments.push({ start: 5, end: 5, text: "degenerate", submitted: false });
    view.renderSegments();
    await view.submitSegment(view.segments.length - 1);
    const seg = view.segments.at(-1)!;
    expect(seg.submitted).toBe(false);
    expect(seg.error).toBeTruthy();
    expect(document.getElementById("segment-list")!.textContent).toContain(seg.error!);
  }, 30_000);

  it("frame scrubbing points at the service's render endpoint", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const view = new RelabelView(document.getElementById("app")!, baseUrl);
    await waitFor(() => view.episode !== null, 10_000);
    view.seek(7);
    const url = view.frameUrl(7);
    expect(url).toContain("/frames/7/image.png");
    const resp = await fetch(url);
    expect(resp.status).toBe(200);
    expect(resp.headers.get("content-type")).toBe("image/png");
  }, 30_000);
});

async function waitFor(cond: () => boolean, timeoutMs: number): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) throw new Error("timed out waiting");
    await new Promise((r) => setTimeout(r, 50));
  }
}
