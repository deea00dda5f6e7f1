// Pure view-state rules, kept out of the DOM so they can be unit-tested.

import type { Turn } from './api.js';

export type InputMode = 'answer' | 'cloze' | 'none';

/** Which input the patient may use in a given server phase. */
export function inputMode(phase: string): InputMode {
  if (phase === 'AwaitingAnswer') return 'answer';
  if (phase === 'ClozeTest') return 'cloze';
  return 'none';
}

export interface Bubble {
  side: 'bot' | 'patient';
  kindClass: string;
  text: string;
  index: number;
}

const KNOWN_KINDS: Record<string, string> = {
  Prompt: 'prompt',
  Answer: 'answer',
  Feedback: 'feedback',
  Acknowledgment: 'ack',
  'Repeat-Invite': 'repeat',
  System: 'system',
};

/** Map one server turn to a bubble. Unknown kinds become generic system bubbles. */
export function bubbleFor(turn: Turn): Bubble {
  let kindClass = KNOWN_KINDS[turn.kind];
  if (kindClass === undefined) {
    console.warn(`unknown turn kind ${turn.kind}, rendering as system bubble`);
    kindClass = 'system';
  }
  return {
    side: turn.speaker === 'patient' ? 'patient' : 'bot',
    kindClass,
    text: turn.text,
    index: turn.index,
  };
}

/**
 * The turns shown as chat bubbles. System turns stay out of the chat: the
 * note text already fills the left panel and phase changes have their own
 * indicator, so a None-condition session keeps an empty conversation.
 */
export function transcriptBubbles(turns: Turn[]): Bubble[] {
  return turns.filter((t) => t.kind !== 'System').map(bubbleFor);
}

let requestCounter = 0;

/** A fresh idempotency key for one answer submission. */
export function freshRequestId(): string {
  if (typeof crypto !== 'undefined' && typeof crypto.randomUUID === 'function') {
    return crypto.randomUUID();
  }
  requestCounter += 1;
  return `r-${Date.now()}-${requestCounter}`;
}

/** percentage text shown under the quiz, e.g. 0.8 -> "80%" */
export function formatAccuracy(accuracy: number): string {
  return `${Math.round(accuracy * 100)}%`;
}
