// Chat state machine: one active session, one in-flight request at a time.
//
// Turns are never fabricated locally; the transcript is always the last
// SessionView fetched from the server. After a send, the controller polls
// until the session leaves the in-flight states (classifying/answering),
// and flags the conversation as stalled if that takes longer than the
// polling timeout.

import { ApiError, ServiceInfo, SessionApi, SessionState, SessionView } from "./api.js"

export interface ControllerOptions {
  pollIntervalMs?: number
  pollTimeoutMs?: number
  onChange?: () => void
}

const IN_FLIGHT: SessionState[] = ["classifying", "answering"]

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms))

export class ChatController {
  view: SessionView | null = null
  sessionId: string | null = null
  banner: string | null = null
  stalled = false
  busy = false
  serviceInfo: ServiceInfo | null = null

  private pollIntervalMs: number
  private pollTimeoutMs: number
  private onChange: () => void

  constructor(private api: SessionApi, options: ControllerOptions = {}) {
    this.pollIntervalMs = options.pollIntervalMs ?? 1000
    this.pollTimeoutMs = options.pollTimeoutMs ?? 60_000
    this.onChange = options.onChange ?? (() => {})
  }

  private changed(): void {
    this.onChange()
  }

  get state(): SessionState | null {
    return this.view?.state ?? (this.sessionId ? "awaiting_question" : null)
  }

  /** Input is locked while a request or the model is in flight, and once
   *  the dialogue has finished (a new conversation starts instead). */
  inputLocked(): boolean {
    if (this.busy) return true
    const state = this.state
    if (state === null) return true
    return state === "classifying" || state === "answering" || state === "done" || state === "aborted"
  }

  canSend(text: string): boolean {
    return text.trim().length > 0 && !this.inputLocked()
  }

  /** Bind a fresh session; shows a retryable banner if the service is down. */
  async start(): Promise<void> {
    this.banner = null
    this.stalled = false
    this.view = null
    this.sessionId = null
    this.changed()
    try {
      this.serviceInfo = this.serviceInfo ?? (await this.api.getConfig().catch(() => null))
      const created = await this.api.createSession()
      this.sessionId = created.session_id
    } catch (err) {
      this.banner = err instanceof ApiError ? `service error: ${err.message}` : String(err)
    }
    this.changed()
  }

  async send(text: string): Promise<void> {
    if (!this.canSend(text) || this.sessionId === null) return
    this.busy = true
    this.banner = null
    this.stalled = false
    this.changed()
    try {
      this.view = await this.api.postMessage(this.sessionId, text.trim())
      this.changed()
      await this.pollWhileInFlight()
    } catch (err) {
      this.banner = err instanceof ApiError ? `service error: ${err.message}` : String(err)
    } finally {
      this.busy = false
      this.changed()
    }
  }

  private async pollWhileInFlight(): Promise<void> {
    const deadline = Date.now() + this.pollTimeoutMs
    while (this.view !== null && IN_FLIGHT.includes(this.view.state)) {
      if (Date.now() >= deadline) {
        this.stalled = true
        this.changed()
        return
      }
      await sleep(this.pollIntervalMs)
      if (this.sessionId === null) return
      this.view = await this.api.getSession(this.sessionId)
      this.changed()
    }
  }

  /** Refresh the transcript once (used by the stalled-state retry). */
  async refresh(): Promise<void> {
    if (this.sessionId === null) return
    try {
      this.view = await this.api.getSession(this.sessionId)
      if (!IN_FLIGHT.includes(this.view.state)) this.stalled = false
    } catch (err) {
      this.banner = err instanceof ApiError ? `service error: ${err.message}` : String(err)
    }
    this.changed()
  }

  /** Drop the finished dialogue and bind a brand-new session. */
  async newConversation(): Promise<void> {
    await this.start()
  }
}
