// DOM construction. Server-supplied text only ever goes through textContent.

import type { Bubble } from './state.js';
import type { ClozeResult } from './api.js';
import { formatAccuracy } from './state.js';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function appShell(): string {
  return `
  <section id="setup-screen">
    <h1>Discharge instructions review</h1>
    <form id="setup-form">
      <label>Paste your discharge note
        <textarea id="setup-note" rows="8" placeholder="Discharge instructions text"></textarea>
      </label>
      <label>or reuse a note already on the server
        <input id="setup-note-id" placeholder="note id (optional)">
      </label>
      <div class="setup-row">
        <label>Session condition
          <select id="setup-condition">
            <option value="QA">QA (questions with feedback)</option>
            <option value="Q">Q (questions only)</option>
            <option value="None">None (just read the note)</option>
          </select>
        </label>
        <label>Question source
          <select id="setup-source">
            <option value="Human">Human</option>
            <option value="GPT_IE">GPT_IE</option>
            <option value="GPT">GPT</option>
          </select>
        </label>
      </div>
      <button type="submit" id="setup-start">Start session</button>
      <p id="setup-error" class="error" hidden></p>
    </form>
  </section>
  <section id="session-screen" hidden>
    <div class="panes">
      <section id="note-pane">
        <h2>Your discharge note</h2>
        <pre id="note-text"></pre>
      </section>
      <section id="chat-pane">
        <header id="chat-header">
          <span id="phase-indicator"></span>
        </header>
        <div id="transcript" aria-live="polite"></div>
        <form id="answer-form" hidden>
          <input id="answer-input" autocomplete="off" placeholder="Type your answer">
          <button type="submit" id="answer-send">Send</button>
        </form>
        <div id="retry-bar" class="error" hidden>
          <span id="retry-text"></span>
          <button type="button" id="retry-button">Retry</button>
        </div>
        <form id="cloze-form" hidden>
          <h3>Quick quiz: fill in the blanks</h3>
          <ol id="cloze-items"></ol>
          <button type="submit" id="cloze-submit">Submit quiz</button>
        </form>
        <div id="quiz-result" hidden></div>
      </section>
    </div>
  </section>`;
}

const PHASE_LABELS: Record<string, string> = {
  Reading: 'Read the note on the left.',
  Asking: 'One moment.',
  AwaitingAnswer: 'Your turn: answer the question.',
  ClozeTest: 'Quiz time: fill in the blanks below.',
  Finished: 'All done. Thank you!',
};

export function renderPhase(indicator: HTMLElement, phase: string): void {
  indicator.textContent = PHASE_LABELS[phase] ?? phase;
  indicator.dataset.phase = phase;
}

export function bubbleNode(bubble: Bubble): HTMLElement {
  const node = el('div', `bubble ${bubble.side} ${bubble.kindClass}`);
  node.dataset.index = String(bubble.index);
  node.dataset.kind = bubble.kindClass;
  node.appendChild(el('div', 'bubble-text', bubble.text));
  return node;
}

export function renderTranscript(
  container: HTMLElement,
  bubbles: Bubble[],
  optimisticText: string | null,
): void {
  container.replaceChildren();
  for (const bubble of bubbles) {
    container.appendChild(bubbleNode(bubble));
  }
  if (optimisticText !== null) {
    const ghost = el('div', 'bubble patient answer optimistic');
    ghost.appendChild(el('div', 'bubble-text', optimisticText));
    container.appendChild(ghost);
  }
  container.scrollTop = container.scrollHeight;
}

export function renderClozeFields(list: HTMLOListElement, blanks: string[]): void {
  list.replaceChildren();
  blanks.forEach((sentence, i) => {
    const item = el('li');
    const label = el('label');
    label.appendChild(el('span', 'cloze-sentence', sentence));
    const input = el('input', 'cloze-input');
    input.dataset.item = String(i);
    input.autocomplete = 'off';
    label.appendChild(input);
    item.appendChild(label);
    list.appendChild(item);
  });
}

export function renderQuizResult(box: HTMLElement, result: ClozeResult): void {
  box.replaceChildren();
  box.hidden = false;
  box.appendChild(el('h3', undefined, 'Quiz result'));
  const score = el('p', 'quiz-score');
  score.id = 'quiz-accuracy';
  score.textContent = `You remembered ${formatAccuracy(result.accuracy)} of the blanks.`;
  score.dataset.accuracy = String(result.accuracy);
  box.appendChild(score);
  const list = el('ol', 'quiz-items');
  for (const item of result.items) {
    const row = el('li', item.correct ? 'quiz-correct' : 'quiz-wrong');
    row.textContent = item.correct
      ? `"${item.given}" was right.`
      : `"${item.given}" was not it; the note says "${item.expected}".`;
    list.appendChild(row);
  }
  box.appendChild(list);
}
