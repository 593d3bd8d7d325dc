// Entry point: socket, keyboard, canvas loop, audio, questionnaire.
//
// The client connects to the world server's web-socket endpoint, asks for
// (or adopts) a walker to steer, and paints a top-down view of every
// snapshot it receives. It never holds tick authority.

import { CuePlayer, cueLevels } from "./audio.js";
import { InputState, inputMap } from "./input.js";
import {
    ActorSpawned,
    ServerMessage,
    SnapshotMsg,
    decodeMessage,
    encodeMessage,
    helloMessage,
} from "./protocol.js";
import { DrawCommand, renderScene } from "./render.js";
import { ITEMS, Questionnaire } from "./questionnaire.js";
import { ViewModel } from "./viewmodel.js";

const INPUT_POLL_MS = 16;

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const metersEl = document.getElementById("meters")!;
const endButton = document.getElementById("end-session") as HTMLButtonElement;
const formEl = document.getElementById("questionnaire")!;

const view = new ViewModel();
const input = new InputState();
const player = new CuePlayer();
const questionnaire = new Questionnaire();

const wsUrl = (() => {
    const params = new URLSearchParams(location.search);
    const host = params.get("host") ?? location.hostname ?? "localhost";
    const port = params.get("port") ?? (location.port || "2001");
    return `ws://${host}:${port}/ws`;
})();

const socket = new WebSocket(wsUrl);
let lastSent = "";

socket.onopen = () => {
    view.connection = "open";
    socket.send(encodeMessage(helloMessage("ui")));
    socket.send(encodeMessage({
        type: "spawn_actor",
        blueprint: "walker.avatar",
        transform: [55, -6, 0, 1.5707963, 0, 0],
    }));
};

socket.onclose = () => {
    view.connection = "closed";
};

socket.onmessage = (event: MessageEvent<string>) => {
    let msg: ServerMessage;
    try {
        msg = decodeMessage(event.data);
    } catch {
        return;
    }
    if (msg.type === "actor_spawned" && view.avatarId === null) {
        view.avatarId = (msg as ActorSpawned).id;
        input.headYaw = 1.5707963; // spawned facing the crossing
    } else if (msg.type === "snapshot") {
        const snap = msg as SnapshotMsg;
        if (view.commitSnapshot(snap.data)) {
            if (player.available) {
                player.apply(snap.data.audio);
            } else {
                paintMeters(snap.data.audio);
            }
        }
    } else if (msg.type === "error") {
        statusEl.textContent = `server error: ${JSON.stringify(msg)}`;
    }
};

fetch("/map.json")
    .then(r => (r.ok ? r.json() : null))
    .then(doc => { view.map = doc; })
    .catch(() => { /* map overlay is optional */ });

// -- input loop ---------------------------------------------------------------

window.addEventListener("keydown", e => {
    if (e.repeat) return;
    input.keyDown(e.code);
    player.unlock(); // first gesture unlocks audio
});
window.addEventListener("keyup", e => input.keyUp(e.code));
window.addEventListener("blur", () => input.clear());

setInterval(() => {
    input.integrateTurn(INPUT_POLL_MS / 1000);
    if (view.avatarId === null || socket.readyState !== WebSocket.OPEN) {
        return;
    }
    const control = inputMap(input, view.avatarId);
    const encoded = encodeMessage(control);
    if (encoded !== lastSent) {
        socket.send(encoded);
        lastSent = encoded;
    }
}, INPUT_POLL_MS);

// -- render loop --------------------------------------------------------------

function paint(commands: DrawCommand[]): void {
    ctx.fillStyle = "#22242a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    for (const cmd of commands) {
        switch (cmd.kind) {
            case "polyline": {
                ctx.strokeStyle = cmd.color;
                ctx.lineWidth = cmd.width;
                ctx.beginPath();
                cmd.points.forEach(([x, y], i) =>
                    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y));
                ctx.stroke();
                break;
            }
            case "polygon": {
                ctx.fillStyle = cmd.fill;
                ctx.beginPath();
                cmd.points.forEach(([x, y], i) =>
                    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y));
                ctx.closePath();
                ctx.fill();
                break;
            }
            case "disc": {
                ctx.fillStyle = cmd.fill;
                ctx.beginPath();
                ctx.arc(cmd.x, cmd.y, cmd.r, 0, 2 * Math.PI);
                ctx.fill();
                break;
            }
            case "line": {
                ctx.strokeStyle = cmd.color;
                ctx.lineWidth = cmd.width;
                ctx.beginPath();
                ctx.moveTo(cmd.a[0], cmd.a[1]);
                ctx.lineTo(cmd.b[0], cmd.b[1]);
                ctx.stroke();
                break;
            }
            case "text": {
                ctx.fillStyle = cmd.color;
                ctx.font = "13px monospace";
                ctx.fillText(cmd.text, cmd.x, cmd.y);
                break;
            }
        }
    }
}

function frame(): void {
    requestAnimationFrame(frame);
    statusEl.textContent =
        `${view.connection}  avatar=${view.avatarId ?? "-"}` +
        `  frame=${view.snapshot?.frame ?? "-"}`;
    if (!view.needsRender()) return; // one snapshot -> at most one paint
    view.followAvatar();
    paint(renderScene(view.snapshot!, view.map, view.camera,
                      canvas.width, canvas.height, view.avatarId));
    view.markRendered();
}
requestAnimationFrame(frame);

function paintMeters(cues: SnapshotMsg["data"]["audio"]): void {
    metersEl.innerHTML = cueLevels(cues)
        .map(m => {
            const pct = Math.round(m.level * 100);
            return `<div class="meter"><span>${m.label}</span>` +
                `<div class="bar"><div style="width:${pct}%"></div></div></div>`;
        })
        .join("");
}

// -- questionnaire -------------------------------------------------------------

endButton.addEventListener("click", () => {
    formEl.classList.remove("hidden");
    formEl.innerHTML = buildFormHtml();
    const submit = document.getElementById("submit-csv") as HTMLButtonElement;
    formEl.addEventListener("change", () => {
        readForm();
        submit.disabled = !questionnaire.complete();
    });
    submit.addEventListener("click", () => {
        const subject = (document.getElementById("subject-id") as HTMLInputElement)
            .value || "anonymous";
        const blob = new Blob([questionnaire.toCsv(subject)],
                              { type: "text/csv" });
        const a = document.createElement("a");
        a.href = URL.createObjectURL(blob);
        a.download = "presence_responses.csv";
        a.click();
    });
});

function buildFormHtml(): string {
    const rows = ITEMS.map((item, idx) => {
        const name = `q${idx}`;
        const radios = [1, 2, 3, 4, 5]
            .map(v => `<label><input type="radio" name="${name}" value="${v}">${v}</label>`)
            .join(" ");
        return `<div class="item" data-idx="${idx}">` +
            `<p>${item.prompt}</p><div class="scale">${radios}</div></div>`;
    }).join("");
    return `<h2>How strongly did you feel that...</h2>` +
        `<p class="hint">1 = not at all, 5 = very strongly</p>` +
        `<label>Subject id <input id="subject-id" value="s1"></label>` +
        rows +
        `<button id="submit-csv" disabled>Download responses CSV</button>`;
}

function readForm(): void {
    ITEMS.forEach((item, idx) => {
        const checked = formEl.querySelector<HTMLInputElement>(
            `input[name="q${idx}"]:checked`);
        if (checked) {
            questionnaire.answer(item, Number(checked.value));
        }
    });
}
