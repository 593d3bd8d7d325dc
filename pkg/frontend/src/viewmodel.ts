// Client-side state between the socket and the renderer. Only committed
// snapshots are stored; the displayed frame index never goes backwards.

import { SnapshotDoc } from "./protocol.js";

export interface MapDoc {
    segments: { id: number; centerline: number[][]; lane_width: number }[];
    crosswalks: { id: number; polygon: number[][]; stop_lines: Record<string, number[][]> }[];
}

export class Camera {
    centerX = 50;
    centerY = 0;
    scale = 6; // px per meter

    worldToScreen(x: number, y: number, width: number, height: number): [number, number] {
        // +x right, +y up on screen
        return [
            width / 2 + (x - this.centerX) * this.scale,
            height / 2 - (y - this.centerY) * this.scale,
        ];
    }

    pan(dxPx: number, dyPx: number): void {
        this.centerX -= dxPx / this.scale;
        this.centerY += dyPx / this.scale;
    }

    zoom(factor: number): void {
        this.scale = Math.min(60, Math.max(1, this.scale * factor));
    }
}

export class ViewModel {
    snapshot: SnapshotDoc | null = null;
    map: MapDoc | null = null;
    camera = new Camera();
    avatarId: number | null = null;
    connection: "connecting" | "open" | "closed" = "connecting";
    lastRenderedFrame = -1;

    commitSnapshot(doc: SnapshotDoc): boolean {
        // Frame indices are strictly increasing per session; ignore anything
        // stale so the display is monotonic.
        if (this.snapshot !== null && doc.frame <= this.snapshot.frame) {
            return false;
        }
        this.snapshot = doc;
        return true;
    }

    needsRender(): boolean {
        return this.snapshot !== null
            && this.snapshot.frame > this.lastRenderedFrame;
    }

    markRendered(): void {
        if (this.snapshot !== null) {
            this.lastRenderedFrame = this.snapshot.frame;
        }
    }

    followAvatar(): void {
        if (this.snapshot === null || this.avatarId === null) return;
        const walker = this.snapshot.walkers.find(w => w.id === this.avatarId);
        if (walker) {
            this.camera.centerX = walker.transform[0];
            this.camera.centerY = walker.transform[1];
        }
    }
}
