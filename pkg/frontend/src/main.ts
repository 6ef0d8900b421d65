/** Entry point: wires the API client, session state machine, and renderer. */

import { Client } from "./api.js";
import { Session } from "./session.js";
import { render, Handlers } from "./view.js";

export function createApp(root: HTMLElement, baseUrl: string): Session {
  const client = new Client(baseUrl);
  const session = new Session(client);
  const handlers: Handlers = {
    onChoose: (criterion, choice) => session.choose(criterion, choice),
    onSubmit: () => {
      void session.submit();
    },
    onRetry: () => {
      void session.retry();
    },
  };
  session.onChange((state) => render(root, state, handlers));
  void session.start();
  return session;
}

// When loaded as the page script, boot against the serving origin.  Tests
// import createApp directly and skip this path.
const mount = typeof document !== "undefined" ? document.getElementById("annotator-root") : null;
if (mount !== null) {
  createApp(mount, window.location.origin);
}
