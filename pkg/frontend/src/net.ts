/** WebSocket session: joins a side, feeds ClientState, sends actions.
 *
 * The socket is injected through a minimal interface so tests can use a
 * Node `ws` client or a scripted fake; the browser entry point passes the
 * native WebSocket.
 */

import { ActionMessage, joinMessage, ServerMessage, Side } from "./protocol";
import { ClientState } from "./state";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export class Session {
  readonly state = new ClientState();
  private socket: SocketLike;
  private now: () => number;
  onMessage: ((msg: ServerMessage) => void) | null = null;

  constructor(socket: SocketLike, side: Side, now: () => number = () => Date.now()) {
    this.socket = socket;
    this.now = now;
    socket.onopen = () => socket.send(JSON.stringify(joinMessage(side)));
    socket.onmessage = (ev) => {
      const msg = JSON.parse(String(ev.data)) as ServerMessage;
      this.state.apply(msg, this.now());
      this.onMessage?.(msg);
    };
    socket.onclose = () => {
      if (this.state.status !== "ended") this.state.status = "error";
    };
  }

  sendAction(msg: ActionMessage): void {
    this.socket.send(JSON.stringify(msg));
  }

  close(): void {
    this.socket.close();
  }
}
