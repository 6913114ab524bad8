import { RaterApp } from './app.js';
import { StudyApi } from './api.js';

document.addEventListener('DOMContentLoaded', () => {
  new RaterApp(document, new StudyApi('')).attach();
});
