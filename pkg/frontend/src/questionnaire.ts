// Post-session presence questionnaire: three five-item subscales rated
// 1 (not at all) to 5 (very strongly). Produces the CSV the scoring tool
// accepts: subject_id,subscale,item,rating.

export type Subscale = "self" | "vehicle" | "environment";

export interface Item {
    subscale: Subscale;
    item: number; // 1..5 within its subscale
    prompt: string;
}

export const SCALE_MIN = 1;
export const SCALE_MAX = 5;

export const ITEMS: Item[] = [
    { subscale: "self", item: 1, prompt: "The avatar's hands responded as if they were your hands." },
    { subscale: "self", item: 2, prompt: "Walking in the scene felt like your own walking." },
    { subscale: "self", item: 3, prompt: "The avatar's body felt like your body." },
    { subscale: "self", item: 4, prompt: "Events affecting the avatar felt like they affected you." },
    { subscale: "self", item: 5, prompt: "You identified with the avatar while playing." },
    { subscale: "vehicle", item: 1, prompt: "The car felt like it was really there with you." },
    { subscale: "vehicle", item: 2, prompt: "The car moved in a believable way." },
    { subscale: "vehicle", item: 3, prompt: "You could tell where the car was from its engine sound." },
    { subscale: "vehicle", item: 4, prompt: "The car seemed to notice and react to you." },
    { subscale: "vehicle", item: 5, prompt: "The car felt like a real vehicle rather than a graphic." },
    { subscale: "environment", item: 1, prompt: "You felt like you were standing at a street crossing." },
    { subscale: "environment", item: 2, prompt: "The signals and road markings felt believable." },
    { subscale: "environment", item: 3, prompt: "Crossing the street felt like really crossing a street." },
    { subscale: "environment", item: 4, prompt: "The scene around you felt like a real urban place." },
    { subscale: "environment", item: 5, prompt: "The objects around you felt within reach." },
];

export class Questionnaire {
    readonly answers = new Map<string, number>();

    private key(item: Item): string {
        return `${item.subscale}:${item.item}`;
    }

    answer(item: Item, rating: number): void {
        if (!Number.isInteger(rating) || rating < SCALE_MIN || rating > SCALE_MAX) {
            throw new Error(`rating ${rating} outside ${SCALE_MIN}..${SCALE_MAX}`);
        }
        this.answers.set(this.key(item), rating);
    }

    ratingFor(item: Item): number | null {
        return this.answers.get(this.key(item)) ?? null;
    }

    complete(): boolean {
        return ITEMS.every(item => this.answers.has(this.key(item)));
    }

    toCsv(subjectId: string): string {
        if (!this.complete()) {
            throw new Error("questionnaire incomplete");
        }
        const lines = ["subject_id,subscale,item,rating"];
        for (const item of ITEMS) {
            lines.push(
                `${subjectId},${item.subscale},${item.item},${this.answers.get(this.key(item))}`,
            );
        }
        return lines.join("\n") + "\n";
    }
}
