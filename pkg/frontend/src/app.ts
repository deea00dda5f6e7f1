// Wires the setup screen and the two-panel session view to the REST client.
// One active session per tab; every mutation is a sequential awaited request.

import { ApiClient, ApiError } from './api.js';
import type { Turn } from './api.js';
import { freshRequestId, inputMode, transcriptBubbles } from './state.js';
import {
  appShell,
  renderClozeFields,
  renderPhase,
  renderQuizResult,
  renderTranscript,
} from './render.js';

interface PendingAnswer {
  text: string;
  requestId: string;
}

export class App {
  private api: ApiClient;
  private root: HTMLElement;
  private sessionId = '';
  private phase = '';
  private turns: Turn[] = [];
  private clozeBlanks: string[] | null = null;
  private pending: PendingAnswer | null = null;
  private busy = false;

  constructor(root: HTMLElement, baseUrl = '') {
    this.root = root;
    this.api = new ApiClient(baseUrl);
    root.innerHTML = appShell();
    this.byId<HTMLFormElement>('setup-form').addEventListener('submit', (e) => {
      e.preventDefault();
      void this.startSession();
    });
    this.byId<HTMLFormElement>('answer-form').addEventListener('submit', (e) => {
      e.preventDefault();
      void this.submitAnswer();
    });
    this.byId<HTMLButtonElement>('retry-button').addEventListener('click', () => {
      void this.retryAnswer();
    });
    this.byId<HTMLFormElement>('cloze-form').addEventListener('submit', (e) => {
      e.preventDefault();
      void this.submitCloze();
    });
  }

  private byId<T extends HTMLElement>(id: string): T {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  private async startSession(): Promise<void> {
    if (this.busy) return;
    const errorBox = this.byId<HTMLElement>('setup-error');
    errorBox.hidden = true;
    const noteText = this.byId<HTMLTextAreaElement>('setup-note').value;
    const noteIdField = this.byId<HTMLInputElement>('setup-note-id').value.trim();
    const condition = this.byId<HTMLSelectElement>('setup-condition').value;
    const source = this.byId<HTMLSelectElement>('setup-source').value;

    this.busy = true;
    try {
      let noteId = noteIdField;
      if (noteText.trim()) {
        const created = await this.api.postNote(
          noteIdField ? { text: noteText, note_id: noteIdField } : { text: noteText },
        );
        noteId = created.note_id;
      }
      if (!noteId) {
        throw new ApiError(0, 'SetupError', 'paste a note or give a note id');
      }
      const opened = await this.api.openSession(noteId, condition, source);
      this.sessionId = opened.session_id;
      await this.reconcile();
      this.byId<HTMLElement>('setup-screen').hidden = true;
      this.byId<HTMLElement>('session-screen').hidden = false;
    } catch (err) {
      errorBox.textContent = describe(err);
      errorBox.hidden = false;
    } finally {
      this.busy = false;
    }
  }

  /** Replace all local state with a fresh server snapshot. */
  private async reconcile(): Promise<void> {
    const snapshot = await this.api.getSession(this.sessionId);
    this.phase = snapshot.phase;
    this.turns = snapshot.turns;
    this.clozeBlanks = snapshot.cloze_blanks;
    this.pending = null;
    this.hideRetry();
    this.byId<HTMLElement>('note-text').textContent = snapshot.note_text;
    if (snapshot.cloze_result) {
      renderQuizResult(this.byId<HTMLElement>('quiz-result'), snapshot.cloze_result);
    }
    this.render();
  }

  private render(): void {
    renderPhase(this.byId<HTMLElement>('phase-indicator'), this.phase);
    renderTranscript(
      this.byId<HTMLElement>('transcript'),
      transcriptBubbles(this.turns),
      this.pending ? this.pending.text : null,
    );

    const mode = inputMode(this.phase);
    const answerForm = this.byId<HTMLFormElement>('answer-form');
    const clozeForm = this.byId<HTMLFormElement>('cloze-form');
    answerForm.hidden = mode !== 'answer';
    this.byId<HTMLInputElement>('answer-input').disabled =
      mode !== 'answer' || this.pending !== null;
    this.byId<HTMLButtonElement>('answer-send').disabled =
      mode !== 'answer' || this.pending !== null;

    clozeForm.hidden = mode !== 'cloze';
    if (mode === 'cloze') {
      const list = this.byId<HTMLOListElement>('cloze-items');
      if (list.children.length === 0 && this.clozeBlanks) {
        renderClozeFields(list, this.clozeBlanks);
      }
    }
  }

  private showRetry(message: string): void {
    this.byId<HTMLElement>('retry-text').textContent = message;
    this.byId<HTMLElement>('retry-bar').hidden = false;
  }

  private hideRetry(): void {
    this.byId<HTMLElement>('retry-bar').hidden = true;
  }

  private async submitAnswer(): Promise<void> {
    if (this.busy || inputMode(this.phase) !== 'answer') return;
    const input = this.byId<HTMLInputElement>('answer-input');
    const text = input.value.trim();
    if (!text) return;
    input.value = '';
    await this.sendAnswer({ text, requestId: freshRequestId() });
  }

  private async retryAnswer(): Promise<void> {
    if (this.busy || !this.pending) return;
    const pending = this.pending;
    this.hideRetry();
    await this.sendAnswer(pending);
  }

  private async sendAnswer(pending: PendingAnswer): Promise<void> {
    this.busy = true;
    this.pending = pending;
    this.hideRetry();
    this.render();
    try {
      const result = await this.api.postAnswer(
        this.sessionId,
        pending.text,
        pending.requestId,
      );
      this.pending = null;
      this.turns = this.turns.concat(result.turns);
      this.phase = result.phase;
      if (this.phase === 'ClozeTest' && this.clozeBlanks === null) {
        await this.reconcile();
      } else {
        this.render();
      }
    } catch (err) {
      if (err instanceof ApiError) {
        // stale phase or a rejected answer: the server wins, refetch everything
        this.pending = null;
        if (err.status === 409) {
          await this.reconcile();
        } else {
          this.render();
          this.showRetry(describe(err));
        }
      } else {
        // network trouble: retract the optimistic bubble, offer a retry with
        // the same request id so a duplicate delivery cannot double-advance
        this.pending = null;
        this.render();
        this.pending = pending;
        this.showRetry(`Could not send "${pending.text}".`);
      }
    } finally {
      this.busy = false;
    }
  }

  private async submitCloze(): Promise<void> {
    if (this.busy || inputMode(this.phase) !== 'cloze') return;
    const inputs = Array.from(
      this.byId<HTMLOListElement>('cloze-items').querySelectorAll('input'),
    ) as HTMLInputElement[];
    const responses = inputs.map((node) => node.value);
    this.busy = true;
    try {
      const result = await this.api.postCloze(this.sessionId, responses);
      this.phase = result.phase;
      renderQuizResult(this.byId<HTMLElement>('quiz-result'), result);
      this.render();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.reconcile();
      } else {
        this.showRetry(describe(err));
      }
    } finally {
      this.busy = false;
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.kind}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}

export function initApp(root: HTMLElement, baseUrl = ''): App {
  return new App(root, baseUrl);
}
