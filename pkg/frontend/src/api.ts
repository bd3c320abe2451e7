// Typed client for the rating-study REST API. The UI talks to the service
// only through these four calls; configuration is just the base URL.

export interface Candidate {
    candidate_id: string;
    text: string;
}

export interface StudyItem {
    item_id: string;
    image_url: string;
    candidates: Candidate[];
}

export interface Registration {
    category: string;
    gender: string;
    age: number | null;
}

export interface Scores {
    satisfaction: number;
    accuracy: number;
    creativity: number;
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
        this.name = "ApiError";
    }
}

async function fail(resp: Response): Promise<never> {
    let message = `request failed with status ${resp.status}`;
    try {
        const doc = await resp.json();
        if (doc && typeof doc.message === "string") {
            message = doc.message;
        }
    } catch {
        // non-JSON error body; keep the generic message
    }
    throw new ApiError(resp.status, message);
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudyClient {
    constructor(
        private readonly base: string = "",
        private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    ) {}

    private async post(path: string, body: unknown): Promise<Response> {
        const resp = await this.fetchImpl(this.base + path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!resp.ok) {
            await fail(resp);
        }
        return resp;
    }

    async register(reg: Registration): Promise<string> {
        const resp = await this.post("/api/participants", reg);
        const doc = await resp.json();
        return doc.participant_id as string;
    }

    /** Next unrated item for this participant, or null when the study is done. */
    async nextItem(participant: string): Promise<StudyItem | null> {
        const url = `${this.base}/api/next?participant=${encodeURIComponent(participant)}`;
        const resp = await this.fetchImpl(url);
        if (resp.status === 204) {
            return null;
        }
        if (!resp.ok) {
            await fail(resp);
        }
        return (await resp.json()) as StudyItem;
    }

    async submitRating(
        participant: string,
        itemId: string,
        candidateId: string,
        scores: Scores,
    ): Promise<void> {
        await this.post("/api/ratings", {
            participant_id: participant,
            item_id: itemId,
            candidate_id: candidateId,
            ...scores,
        });
    }
}
