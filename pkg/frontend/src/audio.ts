// Positional cue playback: one looping synthesized voice per source kind,
// volume from the cue gain, stereo position from the cue pan. A rising
// brake_cue edge fires a one-shot. Falls back to returning level data for
// on-screen meters when WebAudio is unavailable.

import { AudioCueDoc } from "./protocol.js";

interface Voice {
    gain: GainNode;
    panner: StereoPannerNode;
    osc: OscillatorNode;
}

export class CuePlayer {
    private ctx: AudioContext | null = null;
    private voices = new Map<string, Voice>();
    private brakeWasOn = new Set<number>();
    available = false;

    unlock(): void {
        if (this.ctx !== null) return;
        try {
            this.ctx = new AudioContext();
            this.available = true;
        } catch {
            this.ctx = null;
            this.available = false;
        }
    }

    private voiceKey(cue: AudioCueDoc): string {
        return `${cue.kind}:${cue.actor ?? "env"}`;
    }

    private makeVoice(kind: string): Voice {
        const ctx = this.ctx!;
        const osc = ctx.createOscillator();
        osc.type = kind === "engine" ? "sawtooth" : "triangle";
        osc.frequency.value = kind === "engine" ? 70
            : kind === "footsteps" ? 4
            : kind === "ambient" ? 220 : 160;
        const gain = ctx.createGain();
        gain.gain.value = 0;
        const panner = ctx.createStereoPanner();
        osc.connect(gain).connect(panner).connect(ctx.destination);
        osc.start();
        return { gain, panner, osc };
    }

    apply(cues: AudioCueDoc[]): void {
        if (!this.ctx) return;
        const seen = new Set<string>();
        for (const cue of cues) {
            const key = this.voiceKey(cue);
            seen.add(key);
            let voice = this.voices.get(key);
            if (!voice) {
                voice = this.makeVoice(cue.kind);
                this.voices.set(key, voice);
            }
            const level = cue.kind === "engine"
                ? cue.gain * (0.3 + 0.7 * cue.intensity)
                : cue.gain;
            voice.gain.gain.setTargetAtTime(0.25 * level, this.ctx.currentTime, 0.05);
            voice.panner.pan.setTargetAtTime(cue.pan, this.ctx.currentTime, 0.05);
            if (cue.kind === "engine") {
                voice.osc.frequency.setTargetAtTime(
                    60 + 140 * cue.intensity, this.ctx.currentTime, 0.1);
            }
            if (cue.actor !== null) {
                if (cue.brake_cue && !this.brakeWasOn.has(cue.actor)) {
                    this.brakeOneShot(cue.pan);
                    this.brakeWasOn.add(cue.actor);
                } else if (!cue.brake_cue) {
                    this.brakeWasOn.delete(cue.actor);
                }
            }
        }
        for (const [key, voice] of this.voices) {
            if (!seen.has(key)) {
                voice.gain.gain.setTargetAtTime(0, this.ctx.currentTime, 0.05);
            }
        }
    }

    private brakeOneShot(pan: number): void {
        const ctx = this.ctx!;
        const osc = ctx.createOscillator();
        osc.type = "square";
        osc.frequency.value = 900;
        const gain = ctx.createGain();
        gain.gain.value = 0.2;
        gain.gain.exponentialRampToValueAtTime(0.001, ctx.currentTime + 0.25);
        const panner = ctx.createStereoPanner();
        panner.pan.value = pan;
        osc.connect(gain).connect(panner).connect(ctx.destination);
        osc.start();
        osc.stop(ctx.currentTime + 0.3);
    }
}

// The fallback meter view: kind -> level in [0, 1], for when audio is locked.
export function cueLevels(cues: AudioCueDoc[]): { label: string; level: number }[] {
    return cues.map(cue => ({
        label: `${cue.kind}${cue.actor !== null ? " #" + cue.actor : ""}`,
        level: Math.max(0, Math.min(1, cue.gain)),
    }));
}
