// Typed client for the dischargeqa REST service. The UI talks to the server
// through this module only; there is no direct LLM access from the browser.

export interface VerdictDict {
  label: string;
  feedback: string;
  degraded: boolean;
}

export interface Turn {
  index: number;
  speaker: string;
  kind: string;
  text: string;
  question_id: string | null;
  verdict: VerdictDict | null;
  timestamp: string;
}

export interface SessionOpened {
  session_id: string;
  phase: string;
  turns: Turn[];
}

export interface SessionSnapshot {
  session_id: string;
  note_id: string;
  note_text: string;
  condition: string;
  question_source: string;
  phase: string;
  cloze_result: ClozeResult | null;
  cloze_blanks: string[] | null;
  turns: Turn[];
}

export interface AnswerResult {
  turns: Turn[];
  phase: string;
}

export interface ClozeResult {
  accuracy: number;
  items: { given: string; expected: string; correct: boolean }[];
}

export class ApiError extends Error {
  status: number;
  kind: string;

  constructor(status: number, kind: string, detail: string) {
    super(detail);
    this.status = status;
    this.kind = kind;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let kind = 'HttpError';
  let detail = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') kind = body.error;
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body, keep the status line
  }
  return new ApiError(response.status, kind, detail);
}

export class ApiClient {
  constructor(private baseUrl = '') {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  postNote(body: {
    text?: string;
    note_id?: string;
    cloze_items?: { blanked_sentence: string; gold: string; aliases?: string[] }[];
  }): Promise<{ note_id: string }> {
    return this.request('POST', '/notes', body);
  }

  openSession(noteId: string, condition: string, questionSource: string): Promise<SessionOpened> {
    return this.request('POST', '/sessions', {
      note_id: noteId,
      condition,
      question_source: questionSource,
    });
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request('GET', `/sessions/${sessionId}`);
  }

  postAnswer(sessionId: string, text: string, requestId: string): Promise<AnswerResult> {
    return this.request('POST', `/sessions/${sessionId}/answer`, {
      text,
      request_id: requestId,
    });
  }

  postCloze(sessionId: string, responses: string[]): Promise<ClozeResult & { phase: string }> {
    return this.request('POST', `/sessions/${sessionId}/cloze`, { responses });
  }
}
