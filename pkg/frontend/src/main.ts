/**
 * Operator panel wiring: three motor buttons, live state readouts and the
 * five-tile camera mosaic.  Host/port come from query parameters
 * (?host=...&port=...), defaulting to the page host and 8765.
 */

import { drawTile, tileCaption } from "./mosaic.js";
import { encodeButtonCommand, type ServerMessage } from "./protocol.js";
import {
  applyConnection,
  applyMessage,
  buttonLabel,
  buttonsEnabled,
  initialView,
  type SessionView,
} from "./session.js";
import { ReconnectingSocket } from "./socket.js";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? (window.location.hostname || "127.0.0.1");
const port = params.get("port") ?? "8765";

let view: SessionView = initialView();

const banner = document.getElementById("banner") as HTMLDivElement;
const notice = document.getElementById("notice") as HTMLDivElement;
const stateLine = document.getElementById("state-line") as HTMLDivElement;
const mosaic = document.getElementById("mosaic") as HTMLDivElement;
const buttons: HTMLButtonElement[] = [1, 2, 3].map(
  (i) => document.getElementById(`button-${i}`) as HTMLButtonElement,
);

const canvases: HTMLCanvasElement[] = [];
const captions: HTMLDivElement[] = [];
for (let cam = 0; cam < 5; cam++) {
  const cell = document.createElement("div");
  cell.className = "tile";
  const canvas = document.createElement("canvas");
  const caption = document.createElement("div");
  caption.className = "caption";
  caption.textContent = `cam ${cam}`;
  cell.append(canvas, caption);
  mosaic.append(cell);
  canvases.push(canvas);
  captions.push(caption);
}

const socket = new ReconnectingSocket(`ws://${host}:${port}`, {
  onMessage(msg: ServerMessage) {
    view = applyMessage(view, msg);
    if (msg.kind === "error") showNotice(view.lastError ?? "server error");
  },
  onStatus(status) {
    view = applyConnection(view, status);
  },
  onDecodeError(error) {
    showNotice(`bad packet: ${error.message}`);
  },
});
socket.open();

buttons.forEach((button, index) => {
  button.addEventListener("click", () => {
    if (!buttonsEnabled(view)) {
      showNotice("not connected — command not sent");
      return;
    }
    if (!socket.send(encodeButtonCommand(index + 1))) {
      showNotice("send failed — command dropped");
    }
  });
});

let noticeTimer: ReturnType<typeof setTimeout> | null = null;
function showNotice(text: string): void {
  notice.textContent = text;
  notice.classList.add("visible");
  if (noticeTimer !== null) clearTimeout(noticeTimer);
  noticeTimer = setTimeout(() => notice.classList.remove("visible"), 4000);
}

function render(): void {
  banner.textContent = view.status;
  banner.className = `banner ${view.status}`;
  const enabled = buttonsEnabled(view);
  buttons.forEach((button, index) => {
    button.disabled = !enabled;
    button.textContent = `motor ${index + 1}: ${buttonLabel(view, index)}`;
  });

  const state = view.lastState;
  if (state !== null) {
    const counts = state.motors.map((m) => m.encoderCount.toString()).join(" / ");
    const duties = state.motors.map((m) => m.pwmDuty).join(" / ");
    stateLine.textContent =
      `t=${state.simTimeS.toFixed(2)}s  progress=${(state.progress * 100).toFixed(0)}%  ` +
      `counts ${counts}  duty ${duties}`;
  } else {
    stateLine.textContent = "waiting for state…";
  }

  const frames = view.lastFrames;
  if (frames !== null) {
    frames.tiles.forEach((tile, i) => {
      if (i < canvases.length) {
        drawTile(canvases[i], tile, 3);
        captions[i].textContent = tileCaption(tile);
        captions[i].classList.toggle("corrupt", tile.status === 1);
      }
    });
  }
  requestAnimationFrame(render);
}

requestAnimationFrame(render);
