// End-to-end conformance: the built bundle drives a real service over HTTP.
// The service runs on a replayed LLM fixture, so the whole flow is
// deterministic and needs no network beyond localhost.

import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { spawn, type ChildProcess } from 'node:child_process';
import { createServer, type AddressInfo } from 'node:net';
import { fileURLToPath } from 'node:url';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

declare global {
  interface Window {
    happyDOM?: { setURL: (url: string) => void };
  }
}

const HERE = path.dirname(fileURLToPath(import.meta.url));
const REPO = path.resolve(HERE, '../..');
const DIST = path.resolve(HERE, '../dist');

const NOTE_TEXT = [
  'You were admitted with abdominal pain. A CT scan was done to find the cause of your pain. ' +
    'The CT scan showed diverticulitis. You were treated with antibiotics and your pain improved.',
  '',
  'Followup Instructions:',
  'Please continue taking Ciprofloxacin 500 mg twice a day for 7 days.',
  'You have a follow-up appointment at the gastroenterology clinic on Monday.',
  '',
].join('\n');

const CLOZE_ITEMS = [
  { blanked_sentence: 'The CT scan showed _____.', gold: 'diverticulitis' },
  {
    blanked_sentence: 'Please continue taking _____ 500 mg twice a day for 7 days.',
    gold: 'Ciprofloxacin',
  },
  {
    blanked_sentence: 'Please continue taking Ciprofloxacin _____ twice a day for 7 days.',
    gold: '500 mg',
    aliases: ['500mg'],
  },
  {
    blanked_sentence: 'Please continue taking Ciprofloxacin 500 mg twice a day for _____.',
    gold: '7 days',
  },
  { blanked_sentence: 'You were admitted with _____.', gold: 'abdominal pain' },
];

const KIND_CLASSES: Record<string, string> = {
  Prompt: 'prompt',
  Answer: 'answer',
  Feedback: 'feedback',
  Acknowledgment: 'ack',
  'Repeat-Invite': 'repeat',
};

let child: ChildProcess | null = null;
let tmpDir = '';
let origin = '';
let stderrLog = '';
let startedAt = 0;
let initApp: (root: HTMLElement, baseUrl?: string) => unknown;

async function freePort(): Promise<number> {
  return await new Promise((resolve, reject) => {
    const probe = createServer();
    probe.on('error', reject);
    probe.listen(0, '127.0.0.1', () => {
      const port = (probe.address() as AddressInfo).port;
      probe.close(() => resolve(port));
    });
  });
}

async function until(check: () => boolean, what: string, tries = 2000): Promise<void> {
  for (let i = 0; i < tries; i++) {
    if (check()) return;
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
  throw new Error(`timed out waiting for ${what}\nservice stderr:\n${stderrLog}`);
}

async function serviceReady(): Promise<void> {
  for (let i = 0; i < 400; i++) {
    try {
      const response = await fetch(`${origin}/`);
      if (response.ok) return;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`service never came up\nstderr:\n${stderrLog}`);
}

async function listSessions(): Promise<string[]> {
  const response = await fetch(`${origin}/`);
  return (await response.json()).sessions as string[];
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function bubbleNodes(): HTMLElement[] {
  return Array.from(byId('transcript').children) as HTMLElement[];
}

function bubbleTexts(): (string | null)[] {
  return bubbleNodes().map(
    (node) => (node.querySelector('.bubble-text') as HTMLElement).textContent,
  );
}

function submit(formId: string): void {
  byId<HTMLFormElement>(formId).dispatchEvent(new Event('submit', { cancelable: true }));
}

async function openUi(condition: string): Promise<string> {
  const before = await listSessions();
  document.body.innerHTML = '<div id="conformance-root"></div>';
  initApp(byId('conformance-root'));
  byId<HTMLInputElement>('setup-note-id').value = 'note-demo';
  byId<HTMLSelectElement>('setup-condition').value = condition;
  byId<HTMLSelectElement>('setup-source').value = 'Human';
  submit('setup-form');
  await until(() => !byId('session-screen').hidden, 'session screen');
  const after = await listSessions();
  const fresh = after.filter((sid) => !before.includes(sid));
  expect(fresh).toHaveLength(1);
  return fresh[0];
}

async function answerViaUi(text: string, expectedBubbles: number): Promise<void> {
  await until(
    () => !byId<HTMLInputElement>('answer-input').disabled,
    'answer input enabled',
  );
  byId<HTMLInputElement>('answer-input').value = text;
  submit('answer-form');
  await until(
    () => bubbleNodes().length === expectedBubbles,
    `${expectedBubbles} bubbles after "${text}"`,
  );
}

async function serverSnapshot(sid: string) {
  const response = await fetch(`${origin}/sessions/${sid}`);
  expect(response.ok).toBe(true);
  return await response.json();
}

function expectTranscriptMatchesServer(snapshot: {
  turns: { kind: string; speaker: string; text: string }[];
}): void {
  const chatTurns = snapshot.turns.filter((t) => t.kind !== 'System');
  expect(bubbleTexts()).toEqual(chatTurns.map((t) => t.text));
  const nodes = bubbleNodes();
  chatTurns.forEach((turnDoc, i) => {
    expect(nodes[i].classList.contains('patient')).toBe(turnDoc.speaker === 'patient');
    expect(nodes[i].dataset.kind).toBe(KIND_CLASSES[turnDoc.kind]);
  });
}

beforeAll(async () => {
  startedAt = Date.now();
  expect(fs.existsSync(path.join(DIST, 'main.js'))).toBe(true);

  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), 'dischargeqa-ui-'));
  const humanPath = path.join(tmpDir, 'human.json');
  fs.writeFileSync(
    humanPath,
    JSON.stringify({
      'note-demo': [
        { text: 'What condition did the CT scan show?', answer_key: 'diverticulitis' },
        { text: 'How often should you take Ciprofloxacin?', answer_key: 'twice a day' },
      ],
    }),
  );
  const configPath = path.join(tmpDir, 'conf.toml');
  fs.writeFileSync(
    configPath,
    [
      '[service]',
      `store_dir = "${path.join(tmpDir, 'sessions')}"`,
      `frontend_dir = "${DIST}"`,
      '',
      '[qgen]',
      `human_questions = "${humanPath}"`,
      '',
      '[dialogue]',
      'repeat_on_incorrect = true',
      '',
      '[llm]',
      `llm_fixture = "${path.join(REPO, 'tests', 'data', 'qa_fixture.jsonl')}"`,
      '',
    ].join('\n'),
  );

  const port = await freePort();
  origin = `http://127.0.0.1:${port}`;
  child = spawn(
    'python3',
    ['-c', 'from dischargeqa.cli import main; main()', 'serve', '--config', configPath,
     '--host', '127.0.0.1', '--port', String(port)],
    { cwd: REPO, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  child.stderr?.on('data', (chunk: Buffer) => {
    stderrLog += chunk.toString();
  });
  child.stdout?.on('data', (chunk: Buffer) => {
    stderrLog += chunk.toString();
  });

  window.happyDOM?.setURL(`${origin}/ui/`);
  await serviceReady();

  const registered = await fetch(`${origin}/notes`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({
      text: NOTE_TEXT,
      note_id: 'note-demo',
      cloze_items: CLOZE_ITEMS,
    }),
  });
  expect(registered.ok).toBe(true);

  initApp = ((await import(path.join(DIST, 'main.js'))) as {
    initApp: typeof initApp;
  }).initApp;
});

afterAll(async () => {
  if (child && child.exitCode === null) {
    child.kill('SIGTERM');
    await new Promise((resolve) => {
      child?.once('exit', resolve);
      setTimeout(resolve, 3000);
    });
    if (child.exitCode === null) child.kill('SIGKILL');
  }
  if (tmpDir) fs.rmSync(tmpDir, { recursive: true, force: true });
});

describe('UI conformance', () => {
  it('serves the built assets at /ui', async () => {
    const page = await fetch(`${origin}/ui/`);
    expect(page.ok).toBe(true);
    expect(await page.text()).toContain('<div id="app">');
  });

  it('completes a QA session whose rendered transcript equals the server transcript', async () => {
    const sid = await openUi('QA');

    expect(byId('phase-indicator').dataset.phase).toBe('AwaitingAnswer');
    expect(byId('note-text').textContent).toBe(NOTE_TEXT);
    expect(bubbleTexts()).toEqual(['What condition did the CT scan show?']);

    // right answer, wrong answer (invites a retry), right answer on the retry
    await answerViaUi('diverticulitis', 4);
    expect(bubbleNodes()[2].classList.contains('feedback')).toBe(true);
    await answerViaUi('once a week', 8);
    expect(bubbleNodes()[6].dataset.kind).toBe('repeat');
    await answerViaUi('twice a day', 10);

    await until(() => !byId('cloze-form').hidden, 'cloze form');
    expect(byId('answer-form').hidden).toBe(true);
    const inputs = Array.from(
      byId('cloze-items').querySelectorAll('input'),
    ) as HTMLInputElement[];
    expect(inputs).toHaveLength(CLOZE_ITEMS.length);

    const responses = ['diverticulitis', 'Ciprofloxacin', '500mg', '7 days', 'stomach cramps'];
    inputs.forEach((input, i) => {
      input.value = responses[i];
    });
    submit('cloze-form');
    await until(() => !byId('quiz-result').hidden, 'quiz result');

    const snapshot = await serverSnapshot(sid);
    expect(snapshot.phase).toBe('Finished');
    expect(snapshot.turns).toHaveLength(12);
    expectTranscriptMatchesServer(snapshot);
    expect(snapshot.cloze_result.accuracy).toBe(0.8);
    const score = byId('quiz-accuracy');
    expect(score.dataset.accuracy).toBe(String(snapshot.cloze_result.accuracy));
    expect(score.textContent).toContain('80%');
  });

  it('completes a None session: empty chat, quiz scored by the server', async () => {
    const sid = await openUi('None');

    expect(byId('phase-indicator').dataset.phase).toBe('ClozeTest');
    expect(bubbleNodes()).toHaveLength(0);
    expect(byId('answer-form').hidden).toBe(true);

    const inputs = Array.from(
      byId('cloze-items').querySelectorAll('input'),
    ) as HTMLInputElement[];
    expect(inputs).toHaveLength(CLOZE_ITEMS.length);
    const responses = ['diverticulitis', 'wrong', 'wrong', 'wrong', 'wrong'];
    inputs.forEach((input, i) => {
      input.value = responses[i];
    });
    submit('cloze-form');
    await until(() => !byId('quiz-result').hidden, 'quiz result');

    const snapshot = await serverSnapshot(sid);
    expect(snapshot.phase).toBe('Finished');
    expect(snapshot.turns.every((t: { kind: string }) => t.kind === 'System')).toBe(true);
    expect(bubbleNodes()).toHaveLength(0);
    expect(snapshot.cloze_result.accuracy).toBe(0.2);
    expect(byId('quiz-accuracy').dataset.accuracy).toBe('0.2');
    expect(byId('quiz-accuracy').textContent).toContain('20%');

    const elapsed = (Date.now() - startedAt) / 1000;
    expect(elapsed).toBeLessThan(120);
    console.log(`[PASS] UI conformance (${elapsed.toFixed(1)}s, limit 120s)`);
  });
});
