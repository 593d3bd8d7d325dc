import { describe, expect, it } from "vitest";

import { cueLevels } from "../src/audio.js";
import { AudioCueDoc } from "../src/protocol.js";

function cue(overrides: Partial<AudioCueDoc>): AudioCueDoc {
    return {
        actor: 1, kind: "engine", gain: 0.5, pan: 0,
        intensity: 0.2, brake_cue: false, ...overrides,
    };
}

describe("cue meter fallback", () => {
    it("labels sources and clamps levels", () => {
        const meters = cueLevels([
            cue({ actor: 3, kind: "engine", gain: 0.5 }),
            cue({ actor: null, kind: "ambient", gain: 0.4 }),
            cue({ actor: 2, kind: "footsteps", gain: 2.5 }),
        ]);
        expect(meters[0]).toEqual({ label: "engine #3", level: 0.5 });
        expect(meters[1].label).toBe("ambient");
        expect(meters[2].level).toBe(1); // clamped
    });

    it("muted source shows an empty bar", () => {
        const [m] = cueLevels([cue({ gain: 0 })]);
        expect(m.level).toBe(0);
    });
});
