import { initApp } from './app.js';

export { initApp } from './app.js';
export { App } from './app.js';

function boot(): void {
  const root = document.getElementById('app');
  if (root) initApp(root);
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  boot();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', boot);
}
