import { describe, expect, it } from 'vitest';

import { renderCard, renderScreen, renderTask } from '../src/render.js';
import { makeProfile, makeTask } from './helpers.js';

describe('card rendering', () => {
  it('falls back to a placeholder avatar without breaking the card', () => {
    const profile = makeProfile('noimg', { image_url: '' });
    const html = renderCard(profile, 'target', 'left');
    expect(html).toContain('data:image/svg+xml');
    expect(html).toContain('User noimg');
    expect(html).toContain('Bio text for noimg');
    for (let k = 1; k <= 5; k++) expect(html).toContain(`tweet ${k} from noimg`);
  });

  it('renders padded empty tweets as explicit placeholders', () => {
    const profile = makeProfile('padded', {
      sample_tweets: ['only one', '', '', '', ''],
      tweets_padded: true,
    });
    const html = renderCard(profile, 'target', 'right');
    expect(html).toContain('only one');
    expect((html.match(/\(no tweet\)/g) ?? []).length).toBe(4);
  });

  it('escapes user-controlled text', () => {
    const profile = makeProfile('xss', { description: '<script>alert(1)</script>' });
    const html = renderCard(profile, 'target');
    expect(html).not.toContain('<script>alert(1)</script>');
    expect(html).toContain('&lt;script&gt;');
  });

  it('never leaks which side is the protocol pair order', () => {
    const task = makeTask(0);
    const html = renderTask(1, 10, task, { shownLeft: task.right, shownRight: task.left });
    expect(html).not.toContain('pivot');
    // both cards carry the identical markup structure
    expect((html.match(/class="card target"/g) ?? []).length).toBe(2);
  });

  it('task screens carry a progress indicator and the verbatim question', () => {
    const task = makeTask(4, { question: 'Who will the proxy user be more socially influenced by?' });
    const html = renderScreen({
      kind: 'task',
      index: 5,
      total: 10,
      task,
      placement: { shownLeft: task.left, shownRight: task.right },
    });
    expect(html).toContain('Task 5 of 10');
    expect(html).toContain('Who will the proxy user be more socially influenced by?');
  });
});
