// DOM bootstrap: render the session screen into #app and forward clicks.

import { ApiClient } from './api.js';
import { AnnotationSession } from './session.js';
import { renderScreen } from './render.js';

function workerIdFromUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const fromUrl = params.get('worker_id');
  if (fromUrl) {
    localStorage.setItem('worker_id', fromUrl);
    return fromUrl;
  }
  let stored = localStorage.getItem('worker_id');
  if (!stored) {
    stored = `w-${Math.random().toString(36).slice(2, 10)}`;
    localStorage.setItem('worker_id', stored);
  }
  return stored;
}

const app = document.getElementById('app');
if (!app) {
  throw new Error('missing #app container');
}
const session = new AnnotationSession(new ApiClient(''), { workerId: workerIdFromUrl() });

function paint(): void {
  app!.innerHTML = renderScreen(session.screen);
}

app.addEventListener('click', (event) => {
  const target = (event.target as HTMLElement).closest('[data-action]');
  if (!target) return;
  const action = target.getAttribute('data-action');
  const after = (p: Promise<unknown>) => {
    paint(); // show the transitional screen immediately
    p.then(paint, paint);
  };
  if (action === 'fetch') after(session.fetchBatch());
  if (action === 'choose-left') after(session.choose('left'));
  if (action === 'choose-right') after(session.choose('right'));
});

paint();
