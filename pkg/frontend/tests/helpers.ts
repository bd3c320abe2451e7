// Shared bits for the DOM-driving tests.

export function sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function until(cond: () => boolean, what: string): Promise<void> {
    for (let i = 0; i < 400; i++) {
        if (cond()) {
            return;
        }
        await sleep(25);
    }
    throw new Error(`timed out waiting for ${what}`);
}

/** Minimal in-memory stand-in for window.sessionStorage. */
export function memoryStorage(): Storage {
    const map = new Map<string, string>();
    return {
        get length() {
            return map.size;
        },
        clear: () => map.clear(),
        getItem: (key: string) => map.get(key) ?? null,
        key: (index: number) => [...map.keys()][index] ?? null,
        removeItem: (key: string) => void map.delete(key),
        setItem: (key: string, value: string) => void map.set(key, String(value)),
    };
}

/** Click the radio for `value` on every dimension row of a candidate card. */
export function scoreCard(card: Element, value: number): void {
    for (const row of card.querySelectorAll(".scores")) {
        const radio = row.querySelectorAll("input")[value - 1] as HTMLInputElement;
        radio.checked = true;
        radio.dispatchEvent(new Event("change"));
    }
}
