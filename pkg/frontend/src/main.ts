/** Page bootstrap: hash routing between the guidance and relabel screens. */

import { GuidanceSocket } from "./client.js";
import { GuidanceView } from "./guidance.js";
import { RelabelView } from "./relabel.js";

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}

function mount(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const route = location.hash.replace("#", "") || "guidance";
  if (route === "relabel") {
    new RelabelView(root, "");
  } else {
    const socket = new GuidanceSocket(wsUrl());
    new GuidanceView(root, socket);
  }
}

window.addEventListener("hashchange", () => location.reload());
window.addEventListener("load", mount);
