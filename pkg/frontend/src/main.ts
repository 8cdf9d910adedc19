// Entry point: read the session config, pick a queue, mount the app.

import { ReviewApi } from "./api.js";
import { attach } from "./app.js";
import { ReviewSession } from "./state.js";
import type { ItemKind, ItemStatus } from "./types.js";

function config() {
  const params = new URLSearchParams(window.location.search);
  return {
    baseUrl:
      params.get("service") ??
      localStorage.getItem("dxbench.service") ??
      "http://127.0.0.1:8400",
    reviewerId:
      params.get("reviewer") ?? localStorage.getItem("dxbench.reviewer") ?? undefined,
    token: params.get("token") ?? localStorage.getItem("dxbench.token") ?? undefined,
  };
}

function start(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const settings = config();
  localStorage.setItem("dxbench.service", settings.baseUrl);
  if (settings.reviewerId) localStorage.setItem("dxbench.reviewer", settings.reviewerId);
  if (settings.token) localStorage.setItem("dxbench.token", settings.token);

  const api = new ReviewApi(settings);
  const params = new URLSearchParams(window.location.search);
  const kind = (params.get("queue") ?? "mask_verification") as ItemKind;
  const status = (params.get("status") ?? "open") as ItemStatus;
  const session = new ReviewSession(api, kind, status);

  for (const link of document.querySelectorAll<HTMLAnchorElement>("nav a[data-queue]")) {
    link.addEventListener("click", (event) => {
      event.preventDefault();
      const [nextKind, nextStatus] = link.dataset["queue"]!.split(":") as [
        ItemKind,
        ItemStatus,
      ];
      void session.setQueue(nextKind, nextStatus).then(() => attachOnce());
    });
  }

  const attachOnce = () => {
    root.innerHTML = "";
    attach(root, session);
  };
  attachOnce();
}

document.addEventListener("DOMContentLoaded", start);
