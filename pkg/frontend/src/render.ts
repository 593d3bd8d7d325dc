// Scene -> draw commands. Keeping the geometry pure (no canvas calls)
// makes the strip/overlay rules testable; painting happens in main.ts.

import { SnapshotDoc, VehicleStateDoc } from "./protocol.js";
import { Camera, MapDoc } from "./viewmodel.js";

export type DrawCommand =
    | { kind: "polyline"; points: [number, number][]; color: string; width: number }
    | { kind: "polygon"; points: [number, number][]; fill: string }
    | { kind: "disc"; x: number; y: number; r: number; fill: string }
    | { kind: "line"; a: [number, number]; b: [number, number]; color: string; width: number }
    | { kind: "text"; x: number; y: number; text: string; color: string };

const ROAD_COLOR = "#3c3c46";
const CROSSWALK_COLOR = "rgba(235, 235, 235, 0.35)";
const STOP_LINE_COLOR = "#e8e8e8";
const VEHICLE_COLOR = "#2e5ea8";
const WALKER_COLOR = "#d24646";
const AVATAR_COLOR = "#f0a830";
const PHASE_COLORS: Record<string, string> = {
    red: "#e03131",
    amber: "#f5b301",
    green: "#37b24d",
};

export function vehicleCorners(v: VehicleStateDoc): [number, number][] {
    const [x, y] = v.transform;
    const yaw = v.transform[3];
    const hx = v.half_extents[0];
    const hy = v.half_extents[1];
    const c = Math.cos(yaw);
    const s = Math.sin(yaw);
    const local: [number, number][] = [
        [hx, hy], [hx, -hy], [-hx, -hy], [-hx, hy],
    ];
    return local.map(([lx, ly]) => [x + c * lx - s * ly, y + s * lx + c * ly]);
}

// Front edge of the vehicle footprint: where the eHMI strip lives.
export function frontEdge(v: VehicleStateDoc): [[number, number], [number, number]] {
    const corners = vehicleCorners(v);
    return [corners[0], corners[1]]; // both +hx corners
}

export function stripColor(v: VehicleStateDoc): string {
    const [r, g, b] = v.ehmi.strip_color;
    return `rgb(${r},${g},${b})`;
}

function project(camera: Camera, w: number, h: number, p: number[]): [number, number] {
    return camera.worldToScreen(p[0], p[1], w, h);
}

export function renderScene(
    snapshot: SnapshotDoc,
    map: MapDoc | null,
    camera: Camera,
    width: number,
    height: number,
    avatarId: number | null,
): DrawCommand[] {
    const out: DrawCommand[] = [];
    const pr = (p: number[]) => project(camera, width, height, p);

    if (map) {
        for (const seg of map.segments) {
            const lanes = Math.max(
                1,
                (seg as { lanes_forward?: number }).lanes_forward ?? 1,
            );
            out.push({
                kind: "polyline",
                points: seg.centerline.map(pr),
                color: ROAD_COLOR,
                width: Math.max(2, seg.lane_width * 2 * lanes * camera.scale),
            });
        }
        for (const cw of map.crosswalks) {
            out.push({
                kind: "polygon",
                points: cw.polygon.map(pr),
                fill: CROSSWALK_COLOR,
            });
            for (const line of Object.values(cw.stop_lines)) {
                out.push({
                    kind: "line",
                    a: pr(line[0]),
                    b: pr(line[1]),
                    color: STOP_LINE_COLOR,
                    width: 2,
                });
            }
        }
    }

    for (const light of snapshot.lights) {
        out.push({
            kind: "disc",
            x: pr(light.transform)[0],
            y: pr(light.transform)[1],
            r: 5,
            fill: PHASE_COLORS[light.phase] ?? "#888",
        });
    }

    for (const v of snapshot.vehicles) {
        out.push({
            kind: "polygon",
            points: vehicleCorners(v).map(pr),
            fill: VEHICLE_COLOR,
        });
        if (v.ehmi.strip_active) {
            const [a, b] = frontEdge(v);
            out.push({
                kind: "line",
                a: pr(a),
                b: pr(b),
                color: stripColor(v),
                width: 4,
            });
        }
    }

    for (const w of snapshot.walkers) {
        const [sx, sy] = pr(w.transform);
        out.push({
            kind: "disc",
            x: sx,
            y: sy,
            r: Math.max(3, 0.3 * camera.scale),
            fill: w.id === avatarId ? AVATAR_COLOR : WALKER_COLOR,
        });
        // heading tick
        const yaw = w.transform[3];
        const tip = pr([
            w.transform[0] + 0.6 * Math.cos(yaw),
            w.transform[1] + 0.6 * Math.sin(yaw),
        ]);
        out.push({
            kind: "line",
            a: [sx, sy],
            b: tip,
            color: "#ffffff",
            width: 2,
        });
    }

    out.push({
        kind: "text",
        x: 10,
        y: 18,
        text: `frame ${snapshot.frame}  t=${snapshot.sim_time.toFixed(2)}s`,
        color: "#ccc",
    });
    return out;
}
