// Page wiring: bind the controller to the DOM and keep them in sync.

import { SessionApi } from "./api.js"
import { ChatController } from "./controller.js"
import { renderHtml, viewModel } from "./view.js"

const params = new URLSearchParams(window.location.search)
const baseUrl = params.get("api") ?? "http://127.0.0.1:8000"

const transcript = document.getElementById("chat") as HTMLDivElement
const input = document.getElementById("input") as HTMLInputElement
const send = document.getElementById("send") as HTMLButtonElement
const reset = document.getElementById("new-question") as HTMLButtonElement

const controller = new ChatController(new SessionApi(baseUrl), { onChange: render })

function render(): void {
  const vm = viewModel(controller)
  transcript.innerHTML = renderHtml(vm)
  input.disabled = vm.inputDisabled && !vm.replyBoxVisible
  input.placeholder = vm.replyBoxVisible ? "your clarification…" : "ask a question…"
  send.disabled = vm.sendDisabled(input.value)
  reset.hidden = !vm.newQuestionVisible
  const refresh = document.getElementById("refresh")
  if (refresh) refresh.addEventListener("click", () => void controller.refresh())
  transcript.scrollTop = transcript.scrollHeight
}

input.addEventListener("input", () => {
  send.disabled = viewModel(controller).sendDisabled(input.value)
})

async function submit(): Promise<void> {
  const text = input.value
  if (!viewModel(controller).sendDisabled(text)) {
    input.value = ""
    await controller.send(text)
  }
}

send.addEventListener("click", () => void submit())
input.addEventListener("keydown", (event) => {
  if (event.key === "Enter") void submit()
})
reset.addEventListener("click", () => void controller.newConversation())

void controller.start()
