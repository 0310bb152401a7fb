/** Session driver: one active HIT per browser session.
 *
 * Pulls the next assignment (the service serves the qualification HIT
 * first for new workers), mounts a fresh workspace, and submits
 * optimistically — the server is the source of truth, so a rejection
 * (expired lease, span mismatch) surfaces as a banner and a reload of
 * the next assignment.
 */

import { AnnotationApi, ApiError } from "./api.js";
import { LabelWorkspace } from "./labels.js";
import { WorkspaceView, type RenderOptions } from "./render.js";

export type SessionPhase = "idle" | "working" | "drained" | "blocked" | "error";

export interface SessionHooks {
  onPhase?: (phase: SessionPhase, detail?: string) => void;
}

export class AnnotationSession {
  phase: SessionPhase = "idle";
  workspace: LabelWorkspace | null = null;
  view: WorkspaceView | null = null;

  constructor(
    private readonly api: AnnotationApi,
    private readonly workerId: string,
    private readonly mount: HTMLElement,
    private readonly renderOptions: RenderOptions = {},
    private readonly hooks: SessionHooks = {},
  ) {}

  private setPhase(phase: SessionPhase, detail?: string): void {
    this.phase = phase;
    this.hooks.onPhase?.(phase, detail);
  }

  /** Fetch and mount the next HIT. */
  async loadNext(): Promise<boolean> {
    this.workspace = null;
    this.view = null;
    this.mount.replaceChildren();
    let assignment;
    try {
      assignment = await this.api.nextHit(this.workerId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 403) {
        this.setPhase("blocked", error.message);
        return false;
      }
      this.setPhase("error", String(error));
      return false;
    }
    if (!assignment.hit) {
      this.setPhase("drained");
      return false;
    }
    this.workspace = new LabelWorkspace(assignment.hit);
    this.view = new WorkspaceView(
      this.mount.ownerDocument,
      this.workspace,
      this.renderOptions,
    );
    this.mount.appendChild(this.view.root);
    this.setPhase("working", assignment.hit.hit_id);
    return true;
  }

  /** Submit the current workspace; resolves with the server's outcome. */
  async submit() {
    if (!this.workspace) throw new Error("no active HIT");
    const removals = this.workspace.buildRemovals(); // throws if uncategorized
    try {
      return await this.api.submit(
        this.workspace.hit.hit_id,
        this.workerId,
        removals,
        this.workspace.elapsedSeconds(),
      );
    } catch (error) {
      if (error instanceof ApiError) {
        this.setPhase("error", `${error.errorType}: ${error.message}`);
      }
      throw error;
    }
  }
}
