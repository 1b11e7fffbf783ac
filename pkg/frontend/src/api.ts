// Typed client for the clarification session API.

export type SessionState =
  | "awaiting_question"
  | "classifying"
  | "awaiting_clarification"
  | "answering"
  | "done"
  | "aborted"

export type TurnKind =
  | "initial_question"
  | "clarifying_question"
  | "clarification"
  | "final_answer"
  | "direct_answer"

export interface Turn {
  role: "user" | "assistant"
  kind: TurnKind
  text: string
}

export interface Score {
  logprob_true: number
  matched_variant: string
}

export interface SessionView {
  session_id: string
  policy: string
  state: SessionState
  turns: Turn[]
  score: Score | null
  decision: "direct" | "clarify" | null
  final_answer: string | null
  error: string | null
  created_at: string
}

export interface ServiceInfo {
  tau: number
  lambda: number
  backend: string
  prompt_version_hash: string
  default_policy: string
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message)
    this.name = "ApiError"
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class SessionApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init)
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`)
    }
    if (!response.ok) {
      let detail = response.statusText
      try {
        const body = await response.json()
        if (body && typeof body.detail === "string") detail = body.detail
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail)
    }
    return (await response.json()) as T
  }

  async health(): Promise<boolean> {
    try {
      await this.request<{ status: string }>("/healthz")
      return true
    } catch {
      return false
    }
  }

  getConfig(): Promise<ServiceInfo> {
    return this.request<ServiceInfo>("/config")
  }

  createSession(policy?: string): Promise<{ session_id: string; state: SessionState }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(policy ? { policy } : {}),
    })
  }

  postMessage(sessionId: string, text: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    })
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`)
  }
}
