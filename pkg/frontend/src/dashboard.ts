import { ApiClient, ApiError } from "./api.js";
import type { AdvanceResult, IterationsView } from "./types.js";

export type AdvanceOutcome =
  | { kind: "advanced"; result: AdvanceResult }
  | { kind: "blocked"; detail: string; undecided?: number }
  | { kind: "unreachable"; message: string };

/**
 * Read-only view of the running loop. The metrics panel shows the report
 * exactly as the API serves it; nothing is recomputed or re-encoded on
 * the client, so the displayed bytes can be diffed against another run.
 */
export class DashboardController {
  metricsText: string | null = null;
  iterations: IterationsView | null = null;
  banner: string | null = null;

  constructor(private readonly api: ApiClient) {}

  async refresh(): Promise<void> {
    this.banner = null;
    try {
      this.metricsText = await this.api.metricsText();
      this.iterations = await this.api.iterations();
    } catch (err) {
      this.banner = err instanceof Error ? err.message : String(err);
    }
  }

  /** Operator action; the loop never advances from rendering alone. */
  async advance(): Promise<AdvanceOutcome> {
    try {
      const result = await this.api.advance();
      await this.refresh();
      return { kind: "advanced", result };
    } catch (err) {
      if (err instanceof ApiError) {
        return { kind: "blocked", detail: err.detail, undecided: err.undecided };
      }
      return {
        kind: "unreachable",
        message: err instanceof Error ? err.message : String(err),
      };
    }
  }
}

/** Rows for the history table, values passed through as served. */
export function historyRows(view: IterationsView): string[][] {
  const rows: string[][] = [];
  for (const entry of view.history) {
    for (const m of entry.metrics) {
      rows.push([
        String(entry.iteration),
        m.category,
        String(m.ap),
        String(m.ap_se),
        String(m.e_mid),
        String(m.diversity),
        m.converged ? "converged" : "",
        String(entry.queried),
      ]);
    }
    if (entry.metrics.length === 0) {
      rows.push([String(entry.iteration), "", "", "", "", "", "", String(entry.queried)]);
    }
  }
  return rows;
}
