/** Session view state and the suggest -> annotate loop driver. */

import { ApiClient, Suggestion } from "./api.js";
import { AnnotationPayload, DEFAULT_ALPHA, EllipseDraft, commitPayload } from "./ellipse.js";
import { OverlayKind, OverlayState, makeOverlayState, toggleOverlay, withOpacity } from "./overlay.js";
import { IDENTITY_VIEW, PaneView } from "./view.js";

export interface ViewState {
  sessionId: string;
  fixed: PaneView;
  moving: PaneView;
  suggestion: Suggestion | null;
  draft: EllipseDraft | null;
  overlay: OverlayState;
  annotationsCommitted: number;
  alpha: number;
}

export function initialState(sessionId: string): ViewState {
  return {
    sessionId,
    fixed: { ...IDENTITY_VIEW },
    moving: { ...IDENTITY_VIEW },
    suggestion: null,
    draft: null,
    overlay: makeOverlayState(),
    annotationsCommitted: 0,
    alpha: DEFAULT_ALPHA,
  };
}

/** Overlay changes are pure view concerns: annotation fields never move. */
export function setOverlay(state: ViewState, kind: OverlayKind): ViewState {
  return { ...state, overlay: toggleOverlay(state.overlay, kind) };
}

export function setOverlayOpacity(state: ViewState, opacity: number): ViewState {
  return { ...state, overlay: withOpacity(state.overlay, opacity) };
}

/**
 * Drives the loop against the API. One request in flight at a time; the view
 * state advances only after the server confirms.
 */
export class SessionController {
  private state: ViewState;
  private busy = false;

  constructor(
    private readonly api: ApiClient,
    sessionId: string,
  ) {
    this.state = initialState(sessionId);
  }

  get current(): ViewState {
    return this.state;
  }

  private async exclusive<T>(fn: () => Promise<T>): Promise<T> {
    if (this.busy) {
      throw new Error("a request is already in flight for this session");
    }
    this.busy = true;
    try {
      return await fn();
    } finally {
      this.busy = false;
    }
  }

  async refreshSuggestion(): Promise<Suggestion> {
    return this.exclusive(async () => {
      const suggestion = await this.api.suggestion(this.state.sessionId);
      this.state = { ...this.state, suggestion, draft: null };
      return suggestion;
    });
  }

  /** Commit the in-progress ellipse for the active suggestion. */
  async commit(draft: EllipseDraft): Promise<AnnotationPayload> {
    const suggestion = this.state.suggestion;
    if (suggestion === null) {
      throw new Error("no active suggestion to annotate");
    }
    const payload = commitPayload(suggestion.x, draft, this.state.alpha);
    await this.exclusive(async () => {
      const receipt = await this.api.annotate(this.state.sessionId, payload);
      this.state = {
        ...this.state,
        suggestion: null,
        draft: null,
        annotationsCommitted: receipt.n_annotations,
      };
    });
    return payload;
  }

  async skip(): Promise<void> {
    await this.exclusive(async () => {
      await this.api.skip(this.state.sessionId);
      this.state = { ...this.state, suggestion: null, draft: null };
    });
  }
}
