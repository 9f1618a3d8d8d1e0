/**
 * In-progress answers are kept outside component state so a crashed or
 * reloaded page never loses work: the batch controller writes the draft on
 * every answer and clears it only once the server has acknowledged the
 * submission.
 */
export interface DraftStore {
  load(key: string): string | null;
  save(key: string, value: string): void;
  clear(key: string): void;
}

export class MemoryDraftStore implements DraftStore {
  private items = new Map<string, string>();

  load(key: string): string | null {
    return this.items.get(key) ?? null;
  }

  save(key: string, value: string): void {
    this.items.set(key, value);
  }

  clear(key: string): void {
    this.items.delete(key);
  }
}

/** localStorage-backed store; storage failures degrade to no persistence. */
export class BrowserDraftStore implements DraftStore {
  load(key: string): string | null {
    try {
      return window.localStorage.getItem(key);
    } catch {
      return null;
    }
  }

  save(key: string, value: string): void {
    try {
      window.localStorage.setItem(key, value);
    } catch {
      // quota or privacy mode; keep going without a draft
    }
  }

  clear(key: string): void {
    try {
      window.localStorage.removeItem(key);
    } catch {
      // nothing to do
    }
  }
}
