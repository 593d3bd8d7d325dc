// Wire messages: one JSON object per web-socket text frame, discriminated
// by its "type" field. Mirrors the server schema.

export interface Hello {
    type: "hello";
    role: string;
    version: number;
}

export interface Welcome {
    type: "welcome";
    tick_hz: number;
    session_id: number;
    version: number;
}

export interface SpawnActor {
    type: "spawn_actor";
    blueprint: string;
    transform: number[];
}

export interface ActorSpawned {
    type: "actor_spawned";
    id: number;
}

export interface WalkerControl {
    type: "walker_control";
    id: number;
    direction: [number, number];
    speed: number;
    head_yaw: number | null;
}

export interface VehicleStateDoc {
    id: number;
    transform: number[]; // x y z yaw pitch roll
    speed: number;
    wheelbase: number;
    half_extents: number[];
    control: { throttle: number; steer: number; brake: number };
    ehmi: { mode: string; strip_active: boolean; strip_color: number[] };
}

export interface WalkerStateDoc {
    id: number;
    transform: number[];
    speed: number;
    direction: number[];
    drive_mode: string;
    pose: unknown;
}

export interface LightStateDoc {
    id: number;
    transform: number[];
    phase: string;
    remaining: number;
    stop_line: number[][];
}

export interface AudioCueDoc {
    actor: number | null;
    kind: string;
    gain: number;
    pan: number;
    intensity: number;
    brake_cue: boolean;
}

export interface EventDoc {
    kind: string;
    actors: number[];
    data: Record<string, unknown>;
}

export interface SnapshotDoc {
    frame: number;
    sim_time: number;
    vehicles: VehicleStateDoc[];
    walkers: WalkerStateDoc[];
    lights: LightStateDoc[];
    props: { id: number; transform: number[]; half_extents: number[] }[];
    events: EventDoc[];
    audio: AudioCueDoc[];
}

export interface SnapshotMsg {
    type: "snapshot";
    frame: number;
    data: SnapshotDoc;
}

export interface ErrorMsg {
    type: "error";
    code: string;
    detail: string;
}

export interface Ack {
    type: "ack";
    ref: string;
}

export type ServerMessage =
    | Welcome
    | ActorSpawned
    | SnapshotMsg
    | ErrorMsg
    | Ack
    | { type: string; [key: string]: unknown };

export function encodeMessage(msg: object): string {
    return JSON.stringify(msg);
}

export function decodeMessage(text: string): ServerMessage {
    const doc = JSON.parse(text);
    if (typeof doc !== "object" || doc === null || typeof doc.type !== "string") {
        throw new Error("payload is not a typed message object");
    }
    return doc as ServerMessage;
}

export function helloMessage(role: string): Hello {
    return { type: "hello", role, version: 1 };
}

export function walkerControlMessage(
    id: number,
    direction: [number, number],
    speed: number,
    headYaw: number | null,
): WalkerControl {
    return { type: "walker_control", id, direction, speed, head_yaw: headYaw };
}
