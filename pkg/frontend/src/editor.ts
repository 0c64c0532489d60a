/**
 * Mask editor state: the click loop against one session. Click requests are
 * strictly serialized (one in flight, the rest queued) to respect the
 * server's per-session ordering; a failed request leaves the last good
 * session snapshot, and with it the overlay, untouched.
 */

import { ApiClient, SessionView } from "./api.js";
import { displayToImage } from "./coords.js";
import { decodeRle } from "./rle.js";

export type ClickMode = "include" | "exclude";

export class EditorController {
  mode: ClickMode = "include";
  session: SessionView | null = null;
  promptDraft = "";
  pendingJobId: string | null = null;

  private chain: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly api: ApiClient,
    readonly entryId: string,
    readonly imageWidth: number,
    readonly imageHeight: number,
  ) {}

  async open(): Promise<SessionView> {
    const { session_id } = await this.api.createSession(this.entryId);
    this.session = await this.api.getSession(session_id);
    return this.session;
  }

  private get sessionId(): string {
    if (!this.session) throw new Error("editor has no open session");
    return this.session.session_id;
  }

  toggleMode(): ClickMode {
    this.mode = this.mode === "include" ? "exclude" : "include";
    return this.mode;
  }

  /** Serialize an API mutation; later calls wait for earlier ones. */
  private enqueue<T>(action: () => Promise<T>): Promise<T> {
    const next = this.chain.then(action, action);
    this.chain = next.then(
      () => undefined,
      () => undefined,
    );
    return next;
  }

  clickAtDisplay(
    dx: number,
    dy: number,
    displayWidth: number,
    displayHeight: number,
  ): Promise<SessionView> {
    const pixel = displayToImage(dx, dy, displayWidth, displayHeight, this.imageWidth, this.imageHeight);
    return this.clickAtPixel(pixel.x, pixel.y);
  }

  clickAtPixel(x: number, y: number): Promise<SessionView> {
    const polarity = this.mode;
    return this.enqueue(async () => {
      const updated = await this.api.addClick(this.sessionId, x, y, polarity);
      this.session = updated;
      return updated;
    });
  }

  undo(): Promise<SessionView> {
    return this.enqueue(async () => {
      const updated = await this.api.undo(this.sessionId);
      this.session = updated;
      return updated;
    });
  }

  selectCandidate(index: number): Promise<SessionView> {
    return this.enqueue(async () => {
      const updated = await this.api.selectCandidate(this.sessionId, index);
      this.session = updated;
      return updated;
    });
  }

  /**
   * Bits of the currently selected candidate, decoded and checked against
   * the session's image dimensions; null when no candidate exists yet.
   */
  selectedOverlayBits(): Uint8Array | null {
    if (!this.session || this.session.candidates.length === 0) return null;
    const candidate = this.session.candidates[this.session.selected];
    if (!candidate) return null;
    if (candidate.width !== this.imageWidth || candidate.height !== this.imageHeight) {
      throw new Error(
        `candidate is ${candidate.width}x${candidate.height}, image is ` +
          `${this.imageWidth}x${this.imageHeight}`,
      );
    }
    const bits = decodeRle(candidate.rle, candidate.width, candidate.height);
    if (bits.length !== candidate.width * candidate.height) {
      throw new Error("decoded bit count does not match candidate dimensions");
    }
    return bits;
  }

  async generate(prompt: string, seed?: number, numVariants?: number): Promise<string> {
    const { job_id } = await this.api.generate(this.sessionId, prompt, seed, numVariants);
    this.pendingJobId = job_id;
    return job_id;
  }

  /** Poll the pending job until it reaches a terminal state (1 s cadence). */
  async waitForJob(pollIntervalMs = 1000) {
    if (!this.pendingJobId) throw new Error("no generation in flight");
    for (;;) {
      const job = await this.api.getJob(this.pendingJobId);
      if (job.state === "succeeded" || job.state === "failed") {
        this.pendingJobId = null;
        return job;
      }
      await new Promise((resolve) => setTimeout(resolve, pollIntervalMs));
    }
  }
}
