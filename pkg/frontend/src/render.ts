// Pure HTML renderers for every screen. No influence estimate is ever
// computed or shown here: this surface only captures judgments.

import type { Ack, Placement, Profile, Task } from './types.js';
import type { Screen } from './session.js';

const PLACEHOLDER_AVATAR =
  'data:image/svg+xml,' +
  encodeURIComponent(
    '<svg xmlns="http://www.w3.org/2000/svg" width="96" height="96">' +
    '<rect width="96" height="96" fill="#d0d7de"/>' +
    '<circle cx="48" cy="36" r="16" fill="#8c959f"/>' +
    '<ellipse cx="48" cy="78" rx="26" ry="18" fill="#8c959f"/></svg>',
  );

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function count(label: string, value: number): string {
  return `<span class="count"><b>${value.toLocaleString('en-US')}</b> ${label}</span>`;
}

/** One user card; targets and the proxy all render the identical feature set. */
export function renderCard(profile: Profile, role: 'target' | 'proxy', side?: 'left' | 'right'): string {
  const avatar = profile.image_url ? escapeHtml(profile.image_url) : PLACEHOLDER_AVATAR;
  const tweets = profile.sample_tweets
    .map((t) => `<li class="tweet">${t ? escapeHtml(t) : '<i>(no tweet)</i>'}</li>`)
    .join('');
  const sideAttr = side ? ` data-side="${side}"` : '';
  return `
<div class="card ${role}"${sideAttr} data-target="${escapeHtml(profile.target_id)}">
  <img class="avatar" src="${avatar}" alt="avatar">
  <h3 class="name">${escapeHtml(profile.name)}</h3>
  <p class="description">${escapeHtml(profile.description)}</p>
  <p class="counts">
    ${count('followers', profile.followers)}
    ${count('following', profile.followees)}
    ${count('posts', profile.statuses)}
  </p>
  <a class="profile-link" href="${escapeHtml(profile.profile_url)}" target="_blank" rel="noopener">open profile</a>
  <ul class="tweets">${tweets}</ul>
</div>`;
}

export function renderTask(
  index: number,
  total: number,
  task: Task,
  placement: Placement,
): string {
  return `
<div class="progress">Task ${index} of ${total}</div>
<div class="question">${escapeHtml(task.question)}</div>
<div class="proxy-panel">
  <div class="proxy-label">The proxy user:</div>
  ${renderCard(task.proxy, 'proxy')}
</div>
<div class="pair">
  <button class="pick" data-action="choose-left">${renderCard(placement.shownLeft, 'target', 'left')}</button>
  <button class="pick" data-action="choose-right">${renderCard(placement.shownRight, 'target', 'right')}</button>
</div>`;
}

export function renderAcks(acks: Ack[], completed: number, returned: number): string {
  const rows = acks
    .map((a) => {
      if (a.status === 'rejected' && (a.reason ?? '').includes('lease')) {
        return `<li class="ack returned">${escapeHtml(a.task_id)}: returned to queue</li>`;
      }
      return `<li class="ack ${a.status}">${escapeHtml(a.task_id)}: ${a.status}</li>`;
    })
    .join('');
  return `
<div class="done">
  <h2>Batch complete</h2>
  <p class="completion">${completed} of ${acks.length} answers recorded${
    returned ? `, ${returned} returned to queue` : ''
  }</p>
  <ul class="acks">${rows}</ul>
  <button data-action="fetch">Fetch another batch</button>
</div>`;
}

export function renderScreen(screen: Screen): string {
  switch (screen.kind) {
    case 'idle':
      return '<div class="idle"><button data-action="fetch">Start annotating</button></div>';
    case 'loading':
      return '<div class="loading">Loading tasks…</div>';
    case 'empty':
      return '<div class="empty">No tasks available right now.' +
        ' <button data-action="fetch">Try again</button></div>';
    case 'banned':
      return '<div class="banned"><h2>Session closed</h2>' +
        '<p>This account can no longer take part in the study.</p></div>';
    case 'task':
      return renderTask(screen.index, screen.total, screen.task, screen.placement);
    case 'submitting':
      return `<div class="submitting">Submitting answers (attempt ${screen.attempt})…</div>`;
    case 'done':
      return renderAcks(screen.acks, screen.completed, screen.returned);
    case 'error':
      return `<div class="error">${escapeHtml(screen.message)}` +
        ' <button data-action="fetch">Retry</button></div>';
  }
}
