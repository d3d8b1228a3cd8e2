// In-memory stub of the annotation service, faithful to its idempotency and
// ban semantics, plus fixture builders.

import type { Ack, Batch, Profile, Task } from '../src/types.js';
import type { FetchLike } from '../src/api.js';

export function makeProfile(id: string, overrides: Partial<Profile> = {}): Profile {
  return {
    target_id: id,
    name: `User ${id}`,
    description: `Bio text for ${id}`,
    followers: 1000 + id.length,
    followees: 200,
    statuses: 3400,
    profile_url: `https://example.org/${id}`,
    image_url: `https://example.org/${id}.png`,
    sample_tweets: [1, 2, 3, 4, 5].map((k) => `tweet ${k} from ${id}`),
    tweets_padded: false,
    ...overrides,
  };
}

export function makeTask(i: number, overrides: Partial<Task> = {}): Task {
  return {
    task_id: `r1s${i + 1}`,
    run: 1,
    question_id: (i % 3) + 1,
    question: 'Which user is the proxy user most likely to retweet?',
    left: makeProfile(`tgA${i}`),
    right: makeProfile(`tgB${i}`),
    proxy: makeProfile(`px${i}`),
    lease_expires: Date.now() / 1000 + 600,
    ...overrides,
  };
}

export interface StubOptions {
  banned?: boolean;
  tasks?: Task[];
  /** Task ids whose lease the service reports as expired. */
  expiredLeases?: Set<string>;
  /** POST attempts to fail with a network error before succeeding. */
  failPostsBefore?: number;
}

export class StubService {
  recorded = new Map<string, { choice: string; shown_left?: string }>();
  batchRequests = 0;
  postAttempts = 0;

  constructor(private readonly options: StubOptions = {}) {}

  fetch: FetchLike = async (url, init) => {
    if (url.includes('/api/batch')) {
      this.batchRequests += 1;
      if (this.options.banned) {
        return new Response(JSON.stringify({ reason: 'banned' }), { status: 403 });
      }
      const body: Batch = { worker_id: 'w-test', tasks: this.options.tasks ?? [] };
      return new Response(JSON.stringify(body), { status: 200 });
    }
    if (url.includes('/api/responses')) {
      this.postAttempts += 1;
      if (this.postAttempts <= (this.options.failPostsBefore ?? 0)) {
        throw new TypeError('network down');
      }
      const payload = JSON.parse(String(init?.body)) as {
        worker_id: string;
        responses: { task_id: string; choice: string; shown_left?: string }[];
      };
      const acks: Ack[] = payload.responses.map((r) => {
        if (this.options.expiredLeases?.has(r.task_id)) {
          return { task_id: r.task_id, status: 'rejected', reason: 'lease expired' };
        }
        if (this.recorded.has(r.task_id)) {
          return { task_id: r.task_id, status: 'duplicate' };
        }
        this.recorded.set(r.task_id, { choice: r.choice, shown_left: r.shown_left });
        return { task_id: r.task_id, status: 'recorded' };
      });
      return new Response(JSON.stringify(acks), { status: 200 });
    }
    return new Response('not found', { status: 404 });
  };
}
