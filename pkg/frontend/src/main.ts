// main.ts - wire the session client to the page.
//
// Query parameters pick the session: ?session=s1&scenario=leaving-for-school
// &child=kim&mode=game&token=secret. The page talks to the service that
// serves it (same host), endpoint /ws.

import { SessionClient, type SocketLike } from "./client.js";
import { render, renderProfile } from "./render.js";

/** Adapt a browser WebSocket to the narrow surface the client needs. */
function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  const shim: SocketLike = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
  };
  ws.onopen = () => shim.onopen?.();
  ws.onmessage = (ev) => shim.onmessage?.({ data: String(ev.data) });
  ws.onclose = () => shim.onclose?.();
  return shim;
}

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const sessionId = param("session", `web-${Date.now()}`);
const mode = param("mode", "game") as "game" | "interview";
const token = new URLSearchParams(window.location.search).get("token") ?? undefined;

const app = document.getElementById("app")!;
const profilePane = document.getElementById("profile")!;

const wsScheme = window.location.protocol === "https:" ? "wss" : "ws";

const client = new SessionClient({
  url: `${wsScheme}://${window.location.host}/ws`,
  sessionId,
  token,
  socketFactory: browserSocket,
  onChange: (c) => {
    render(app, c);
    if (c.view.profile) {
      void refreshProfile(c.view.profile.childId);
    }
    if (c.status === "reconnecting") {
      setTimeout(() => c.connect(), 1000);
    }
  },
});

async function refreshProfile(childId: string): Promise<void> {
  const headers: Record<string, string> = token ? { "x-auth-token": token } : {};
  const resp = await fetch(`/api/children/${encodeURIComponent(childId)}/profile`, { headers });
  if (resp.ok) {
    profilePane.innerHTML = renderProfile(await resp.json());
  }
}

function hook(id: string, fn: () => void): void {
  document.getElementById(id)?.addEventListener("click", fn);
}

hook("start", () =>
  client.start(
    mode === "interview"
      ? { mode, childId: param("child", "default") }
      : { mode, scenarioId: param("scenario", "leaving-for-school"), childId: param("child", "default") },
  ),
);
hook("advance", () => client.advance());
hook("agent", () => client.invokeAgent());
hook("image", () => client.requestImage());
hook("end", () => client.end());
let spokenUntil = 0; // typed input has no capture times, so stamp monotone ones
hook("say", () => {
  const input = document.getElementById("utterance") as HTMLInputElement;
  const role = (document.getElementById("role") as HTMLSelectElement).value as "parent" | "child";
  if (input.value.trim()) {
    if (client.view.interview.question && mode === "interview") {
      client.answerInterview(input.value);
    } else {
      const tStart = spokenUntil;
      const tEnd = tStart + 1;
      if (client.sendUtterance({ speaker: role, text: input.value, tStart, tEnd })) {
        spokenUntil = tEnd;
      }
    }
    input.value = "";
  }
});

client.connect();
