// Form state for one item's ratings: which scores are chosen per candidate,
// whether the item is ready to submit, and what still has to be sent after
// a failed attempt. Pure logic, no DOM.

import type { Scores, StudyItem } from "./api.js";

export const DIMENSIONS = ["satisfaction", "accuracy", "creativity"] as const;
export type Dimension = (typeof DIMENSIONS)[number];

export const SCORE_VALUES = [1, 2, 3, 4] as const;

export interface PendingRating {
    candidateId: string;
    scores: Scores;
}

export class RatingForm {
    private readonly selections = new Map<string, Map<Dimension, number>>();
    private readonly submitted = new Set<string>();

    constructor(public readonly item: StudyItem) {
        for (const c of item.candidates) {
            this.selections.set(c.candidate_id, new Map());
        }
    }

    select(candidateId: string, dimension: Dimension, score: number): void {
        const chosen = this.selections.get(candidateId);
        if (!chosen) {
            throw new Error(`unknown candidate ${candidateId}`);
        }
        if (!SCORE_VALUES.includes(score as 1 | 2 | 3 | 4)) {
            throw new Error(`score ${score} not on the 1-4 scale`);
        }
        chosen.set(dimension, score);
    }

    scoreOf(candidateId: string, dimension: Dimension): number | undefined {
        return this.selections.get(candidateId)?.get(dimension);
    }

    candidateComplete(candidateId: string): boolean {
        const chosen = this.selections.get(candidateId);
        return !!chosen && DIMENSIONS.every((d) => chosen.has(d));
    }

    /** True once every candidate has all three dimensions scored. */
    complete(): boolean {
        return this.item.candidates.every((c) => this.candidateComplete(c.candidate_id));
    }

    /** Mark a candidate's rating as accepted by the service. */
    markSubmitted(candidateId: string): void {
        this.submitted.add(candidateId);
    }

    /**
     * Ratings still to send, in candidate order. Candidates already accepted
     * are skipped, so a retry after a partial failure never double-sends.
     */
    pending(): PendingRating[] {
        if (!this.complete()) {
            throw new Error("cannot submit: not every candidate is fully scored");
        }
        const out: PendingRating[] = [];
        for (const c of this.item.candidates) {
            if (this.submitted.has(c.candidate_id)) {
                continue;
            }
            const chosen = this.selections.get(c.candidate_id)!;
            out.push({
                candidateId: c.candidate_id,
                scores: {
                    satisfaction: chosen.get("satisfaction")!,
                    accuracy: chosen.get("accuracy")!,
                    creativity: chosen.get("creativity")!,
                },
            });
        }
        return out;
    }
}
