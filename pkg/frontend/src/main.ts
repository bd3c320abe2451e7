// Single-page rater flow: register -> rate one item at a time -> done.
// Candidates are shown side by side under neutral letter labels; the page
// never sees or shows which method produced a description.

import { StudyClient } from "./api.js";
import type { StudyItem } from "./api.js";
import { DIMENSIONS, RatingForm, SCORE_VALUES } from "./state.js";
import type { Dimension } from "./state.js";

export const CATEGORIES = ["Artist", "Designer", "Random Participant"];
export const GENDERS = ["Male", "Female", "Undisclosed"];

const PARTICIPANT_KEY = "covis-participant";
const LETTERS = "ABCDEFGHIJ";

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    attrs: Record<string, string> = {},
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    for (const [k, v] of Object.entries(attrs)) {
        node.setAttribute(k, v);
    }
    if (text !== undefined) {
        node.textContent = text;
    }
    return node;
}

export class App {
    private participant: string | null;
    private form: RatingForm | null = null;
    private ratedItems = 0;

    constructor(
        private readonly root: HTMLElement,
        private readonly client: StudyClient,
        private readonly storage: Storage,
    ) {
        this.participant = storage.getItem(PARTICIPANT_KEY);
    }

    /** Resume the stored session if there is one, else show registration. */
    async start(): Promise<void> {
        if (this.participant) {
            await this.showNext();
        } else {
            this.renderRegister();
        }
    }

    private setError(message: string | null): void {
        const box = this.root.querySelector<HTMLElement>("#error");
        if (box) {
            box.textContent = message ?? "";
            box.style.display = message ? "block" : "none";
        }
    }

    private renderRegister(): void {
        this.root.replaceChildren();
        const screen = el("div", { id: "register" });
        screen.append(el("h1", {}, "Rate image descriptions"));
        screen.append(el("p", {}, "Tell us a little about yourself to begin."));

        const category = el("select", { id: "category" });
        for (const c of CATEGORIES) {
            category.append(el("option", { value: c }, c));
        }
        const gender = el("select", { id: "gender" });
        for (const g of GENDERS) {
            gender.append(el("option", { value: g }, g));
        }
        const age = el("input", { id: "age", type: "number", min: "1", placeholder: "age (optional)" });

        for (const [label, field] of [["I am a", category], ["Gender", gender], ["Age", age]] as const) {
            const row = el("label", { class: "field" }, `${label} `);
            row.append(field);
            screen.append(row);
        }

        const start = el("button", { id: "start" }, "Start rating");
        start.onclick = async () => {
            this.setError(null);
            try {
                const id = await this.client.register({
                    category: category.value,
                    gender: gender.value,
                    age: age.value ? Number(age.value) : null,
                });
                this.participant = id;
                this.storage.setItem(PARTICIPANT_KEY, id);
                await this.showNext();
            } catch (err) {
                this.setError(`Could not register: ${(err as Error).message}. Please try again.`);
            }
        };
        screen.append(start);
        screen.append(el("div", { id: "error", style: "display:none" }));
        this.root.append(screen);
    }

    private async showNext(): Promise<void> {
        let item: StudyItem | null;
        try {
            item = await this.client.nextItem(this.participant!);
        } catch (err) {
            this.root.replaceChildren(el("div", { id: "error" },
                `Could not reach the study service: ${(err as Error).message}`));
            return;
        }
        if (item === null) {
            this.renderDone();
            return;
        }
        this.form = new RatingForm(item);
        this.renderItem(item);
    }

    private renderItem(item: StudyItem): void {
        this.root.replaceChildren();
        const screen = el("div", { id: "rating", "data-item": item.item_id });
        screen.append(el("h1", {}, "How well does each description fit the image?"));
        screen.append(el("img", { id: "study-image", src: item.image_url, alt: "study image" }));

        const row = el("div", { id: "candidates" });
        item.candidates.forEach((candidate, i) => {
            const card = el("div", { class: "candidate", "data-candidate": candidate.candidate_id });
            card.append(el("h2", {}, `Description ${LETTERS[i] ?? String(i + 1)}`));
            card.append(el("p", { class: "text" }, candidate.text));
            for (const dim of DIMENSIONS) {
                card.append(this.scoreRow(candidate.candidate_id, dim));
            }
            row.append(card);
        });
        screen.append(row);

        const submit = el("button", { id: "submit", disabled: "" }, "Submit ratings");
        submit.onclick = () => void this.submit();
        screen.append(submit);
        screen.append(el("div", { id: "error", style: "display:none" }));
        this.root.append(screen);
    }

    private scoreRow(candidateId: string, dimension: Dimension): HTMLElement {
        const row = el("div", { class: "scores" }, `${dimension}: `);
        for (const value of SCORE_VALUES) {
            const label = el("label", {}, String(value));
            const input = el("input", {
                type: "radio",
                name: `${candidateId}-${dimension}`,
                value: String(value),
            });
            input.onchange = () => {
                this.form!.select(candidateId, dimension, value);
                this.refreshSubmit();
            };
            label.prepend(input);
            row.append(label);
        }
        return row;
    }

    private refreshSubmit(): void {
        const submit = this.root.querySelector<HTMLButtonElement>("#submit");
        if (submit) {
            submit.disabled = !this.form!.complete();
        }
    }

    /**
     * Send one rating per candidate. On failure the already-accepted ones are
     * remembered, the button turns into a retry, and the next click resumes
     * with the same candidate ids, so the service sees each key once.
     */
    private async submit(): Promise<void> {
        const form = this.form!;
        const submit = this.root.querySelector<HTMLButtonElement>("#submit");
        this.setError(null);
        if (submit) {
            submit.disabled = true;
        }
        try {
            for (const pending of form.pending()) {
                await this.client.submitRating(
                    this.participant!, form.item.item_id, pending.candidateId, pending.scores);
                form.markSubmitted(pending.candidateId);
            }
        } catch (err) {
            this.setError(`Submission failed: ${(err as Error).message}. Nothing was lost.`);
            if (submit) {
                submit.disabled = false;
                submit.textContent = "Retry submission";
            }
            return;
        }
        this.ratedItems += 1;
        await this.showNext();
    }

    private renderDone(): void {
        this.root.replaceChildren();
        const screen = el("div", { id: "done" });
        screen.append(el("h1", {}, "All done, thank you!"));
        screen.append(el("p", { id: "summary" },
            this.ratedItems > 0
                ? `You rated ${this.ratedItems} image${this.ratedItems === 1 ? "" : "s"} this session.`
                : "There is nothing left for you to rate."));
        this.root.append(screen);
    }
}

export async function initApp(
    root: HTMLElement,
    client: StudyClient = new StudyClient(""),
    storage: Storage = window.sessionStorage,
): Promise<App> {
    const app = new App(root, client, storage);
    await app.start();
    return app;
}

// Browser entry point; tests construct the app themselves.
if (typeof document !== "undefined") {
    const root = document.getElementById("app");
    if (root) {
        void initApp(root);
    }
}
