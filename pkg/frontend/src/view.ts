// Pure projection of controller state into what the page shows.
// Keeping this DOM-free lets the UI contract be tested headlessly.

import { Turn } from "./api.js"
import { ChatController } from "./controller.js"

export interface BadgeModel {
  logprob: number
  tau: number | null
  decision: "ambiguous" | "unambiguous"
}

export interface ChatViewModel {
  turns: Turn[]
  replyBoxVisible: boolean
  newQuestionVisible: boolean
  inputDisabled: boolean
  sendDisabled: (draft: string) => boolean
  badge: BadgeModel | null
  banner: string | null
  stalled: boolean
  working: boolean
}

export function viewModel(controller: ChatController): ChatViewModel {
  const view = controller.view
  const state = controller.state
  const badge: BadgeModel | null =
    view && view.score
      ? {
          logprob: view.score.logprob_true,
          tau: controller.serviceInfo?.tau ?? null,
          decision: view.decision === "clarify" ? "ambiguous" : "unambiguous",
        }
      : null
  return {
    // Only ever the server's turns; the UI invents nothing.
    turns: view ? view.turns : [],
    replyBoxVisible: state === "awaiting_clarification" && !controller.busy,
    newQuestionVisible: state === "done" || state === "aborted",
    inputDisabled: controller.inputLocked(),
    sendDisabled: (draft: string) => !controller.canSend(draft),
    badge,
    banner: controller.banner ?? (view?.error ? `episode failed: ${view.error}` : null),
    stalled: controller.stalled,
    working: controller.busy || state === "classifying" || state === "answering",
  }
}

const esc = (text: string): string =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;")

export function renderHtml(vm: ChatViewModel): string {
  const rows = vm.turns
    .map((turn) => {
      const cls =
        turn.kind === "clarifying_question"
          ? "turn assistant clarifying"
          : `turn ${turn.role}`
      const label = turn.kind === "clarifying_question" ? "needs clarification" : turn.kind.replace(/_/g, " ")
      return `<div class="${cls}" data-kind="${turn.kind}"><span class="label">${label}</span>${esc(turn.text)}</div>`
    })
    .join("\n")
  const badge = vm.badge
    ? `<span class="badge ${vm.badge.decision}">${vm.badge.decision} · logprob ${vm.badge.logprob.toFixed(2)}${
        vm.badge.tau !== null ? ` vs τ ${vm.badge.tau.toFixed(2)}` : ""
      }</span>`
    : ""
  const banner = vm.banner ? `<div class="banner">${esc(vm.banner)}</div>` : ""
  const stalled = vm.stalled
    ? `<div class="banner stalled">still working… <button id="refresh">check again</button></div>`
    : ""
  const working = vm.working ? `<div class="working">thinking…</div>` : ""
  return `${banner}${stalled}<div class="transcript">${rows}</div>${badge}${working}`
}
