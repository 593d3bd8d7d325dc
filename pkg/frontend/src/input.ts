// Keyboard state -> walker control. W/A/S/D compose a unit direction in
// the avatar frame (W = forward = +x), Shift switches walking to running,
// Q/E turn the heading at 1 rad/s. No movement keys means speed 0.

import { WalkerControl, walkerControlMessage } from "./protocol.js";

export const WALK_SPEED = 1.4; // m/s
export const RUN_SPEED = 3.0; // m/s
export const YAW_RATE = 1.0; // rad/s while Q or E is held

export class InputState {
    private pressed = new Set<string>();
    headYaw = 0;

    keyDown(code: string): void {
        this.pressed.add(code);
    }

    keyUp(code: string): void {
        this.pressed.delete(code);
    }

    clear(): void {
        this.pressed.clear();
    }

    has(code: string): boolean {
        return this.pressed.has(code);
    }

    // Advance the heading by held turn keys; dt in seconds.
    integrateTurn(dt: number): void {
        if (this.pressed.has("KeyQ")) this.headYaw += YAW_RATE * dt;
        if (this.pressed.has("KeyE")) this.headYaw -= YAW_RATE * dt;
    }

    walkVector(): [number, number] {
        let x = 0;
        let y = 0;
        if (this.pressed.has("KeyW")) x += 1;
        if (this.pressed.has("KeyS")) x -= 1;
        if (this.pressed.has("KeyA")) y += 1; // avatar frame: +y is left
        if (this.pressed.has("KeyD")) y -= 1;
        const norm = Math.hypot(x, y);
        if (norm === 0) return [0, 0];
        return [x / norm, y / norm];
    }

    speed(): number {
        const [x, y] = this.walkVector();
        if (x === 0 && y === 0) return 0;
        return this.pressed.has("ShiftLeft") || this.pressed.has("ShiftRight")
            ? RUN_SPEED
            : WALK_SPEED;
    }
}

export function inputMap(state: InputState, avatarId: number): WalkerControl {
    return walkerControlMessage(
        avatarId,
        state.walkVector(),
        state.speed(),
        state.headYaw,
    );
}
