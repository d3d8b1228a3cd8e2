// Session state machine: fetch a batch, present its tasks one at a time,
// submit every choice in one idempotent POST, and report per-task acks.
// Pure data in, screens out; the DOM layer only renders `screen` and calls
// the three actions.

import { ApiClient, BannedError } from './api.js';
import type { Ack, Placement, ResponseItem, Task } from './types.js';

export type Screen =
  | { kind: 'idle' }
  | { kind: 'loading' }
  | { kind: 'empty' } // no tasks right now; offer retry
  | { kind: 'banned' } // terminal: the service refused the session
  | { kind: 'task'; index: number; total: number; task: Task; placement: Placement }
  | { kind: 'submitting'; attempt: number }
  | { kind: 'done'; completed: number; returned: number; acks: Ack[] }
  | { kind: 'error'; message: string };

/** Deterministic 32-bit hash (FNV-1a) of a string. */
function hash32(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export interface SessionOptions {
  workerId: string;
  /** Salts the per-task side randomization; defaults to a random nonce. */
  placementSeed?: string;
  /** Retry schedule for the idempotent submit, in ms. */
  retryDelaysMs?: number[];
  sleep?: (ms: number) => Promise<void>;
}

export class AnnotationSession {
  screen: Screen = { kind: 'idle' };
  private tasks: Task[] = [];
  private cursor = 0;
  private choices = new Map<string, string>();
  private placements = new Map<string, Placement>();
  private readonly placementSeed: string;
  private readonly retryDelaysMs: number[];
  private readonly sleep: (ms: number) => Promise<void>;
  private submitting = false;

  constructor(
    private readonly api: ApiClient,
    private readonly options: SessionOptions,
  ) {
    this.placementSeed = options.placementSeed ?? Math.random().toString(36).slice(2);
    this.retryDelaysMs = options.retryDelaysMs ?? [500, 1000, 2000, 4000, 8000];
    this.sleep = options.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
  }

  /**
   * Sides are shuffled per task so the protocol's pair ordering never shows
   * through as a position bias; the placement is reported with the response.
   */
  placementFor(task: Task): Placement {
    const cached = this.placements.get(task.task_id);
    if (cached) return cached;
    const flip = hash32(`${this.placementSeed}:${task.task_id}`) % 2 === 1;
    const placement: Placement = flip
      ? { shownLeft: task.right, shownRight: task.left }
      : { shownLeft: task.left, shownRight: task.right };
    this.placements.set(task.task_id, placement);
    return placement;
  }

  async fetchBatch(): Promise<Screen> {
    this.screen = { kind: 'loading' };
    try {
      const batch = await this.api.fetchBatch(this.options.workerId);
      this.tasks = batch.tasks;
      this.cursor = 0;
      this.choices.clear();
      this.placements.clear();
      this.screen = this.tasks.length === 0 ? { kind: 'empty' } : this.taskScreen();
    } catch (err) {
      if (err instanceof BannedError) {
        this.screen = { kind: 'banned' };
      } else {
        this.screen = { kind: 'error', message: String(err) };
      }
    }
    return this.screen;
  }

  private taskScreen(): Screen {
    const task = this.tasks[this.cursor];
    return {
      kind: 'task',
      index: this.cursor + 1,
      total: this.tasks.length,
      task,
      placement: this.placementFor(task),
    };
  }

  /** Record the choice for the current task and advance (or submit after the last). */
  async choose(side: 'left' | 'right'): Promise<Screen> {
    if (this.screen.kind !== 'task') return this.screen;
    const { task, placement } = this.screen;
    const chosen = side === 'left' ? placement.shownLeft : placement.shownRight;
    this.choices.set(task.task_id, chosen.target_id);
    if (this.cursor + 1 < this.tasks.length) {
      this.cursor += 1;
      this.screen = this.taskScreen();
      return this.screen;
    }
    return this.submit();
  }

  responsesPayload(): ResponseItem[] {
    return this.tasks
      .filter((t) => this.choices.has(t.task_id))
      .map((t) => ({
        task_id: t.task_id,
        choice: this.choices.get(t.task_id)!,
        shown_left: this.placementFor(t).shownLeft.target_id,
      }));
  }

  /**
   * One durable record per task: the payload is keyed by task id and the
   * service acks duplicates, so retrying the whole POST after a network error
   * (or a double click) cannot double-count anything.
   */
  async submit(): Promise<Screen> {
    if (this.submitting) return this.screen;
    this.submitting = true;
    try {
      const payload = this.responsesPayload();
      let acks: Ack[] | null = null;
      for (let attempt = 0; ; attempt++) {
        this.screen = { kind: 'submitting', attempt: attempt + 1 };
        try {
          acks = await this.api.submitResponses(this.options.workerId, payload);
          break;
        } catch (err) {
          if (attempt >= this.retryDelaysMs.length) {
            this.screen = { kind: 'error', message: `submit failed: ${String(err)}` };
            return this.screen;
          }
          await this.sleep(this.retryDelaysMs[attempt]);
        }
      }
      // expired leases went back to the queue; they don't count as completed
      const returned = acks.filter(
        (a) => a.status === 'rejected' && (a.reason ?? '').includes('lease'),
      ).length;
      const completed = acks.filter(
        (a) => a.status === 'recorded' || a.status === 'duplicate',
      ).length;
      this.screen = { kind: 'done', completed, returned, acks };
      return this.screen;
    } finally {
      this.submitting = false;
    }
  }
}
