// Lockstep session client.  One control message per 100 ms tick while
// connected; the next tick is not sent until the previous state arrived, so
// the contract "one state per control" holds even over a slow link.

import { ClientMsg, ServerMsg, StateMsg, controlMsg, parseServerMsg, serialize } from "./protocol.js";

export interface Transport {
  send(text: string): void;
  onMessage(cb: (text: string) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export class WebSocketTransport implements Transport {
  private ws: WebSocket;
  private messageCb: (text: string) => void = () => {};
  private closeCb: () => void = () => {};

  constructor(url: string, onOpen: () => void) {
    this.ws = new WebSocket(url);
    this.ws.onopen = onOpen;
    this.ws.onmessage = (ev) => this.messageCb(String(ev.data));
    this.ws.onclose = () => this.closeCb();
  }

  send(text: string): void {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(text);
  }

  onMessage(cb: (text: string) => void): void {
    this.messageCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.ws.close();
  }
}

export interface SessionEvents {
  onState?: (s: StateMsg) => void;
  onDemoSaved?: (path: string) => void;
  onError?: (message: string) => void;
  onDisconnect?: () => void;
}

export class SessionClient {
  latest: StateMsg | null = null;
  recording = false;
  controlsSent = 0;
  statesReceived = 0;
  private seq = 0;
  private awaitingState = false;

  constructor(private transport: Transport, private events: SessionEvents = {}) {
    transport.onMessage((text) => this.handle(parseServerMsg(text)));
    transport.onClose(() => this.events.onDisconnect?.());
  }

  hello(): void {
    this.sendMsg({ type: "hello" });
  }

  /** Send one control if the previous reply has arrived.  Returns whether sent. */
  control(steering: number, torque: number): boolean {
    if (this.awaitingState) return false;
    this.awaitingState = true;
    this.sendMsg(controlMsg(steering, torque, this.seq));
    this.seq += 1;
    this.controlsSent += 1;
    return true;
  }

  reset(): void {
    this.sendMsg({ type: "reset" });
  }

  setRecording(on: boolean): void {
    this.recording = on;
    this.sendMsg({ type: "record", on });
  }

  private sendMsg(msg: ClientMsg): void {
    this.transport.send(serialize(msg));
  }

  private handle(msg: ServerMsg): void {
    switch (msg.type) {
      case "state":
        this.latest = msg;
        if (this.awaitingState) {
          this.awaitingState = false;
          this.statesReceived += 1;
        }
        this.events.onState?.(msg);
        break;
      case "demo_saved":
        this.events.onDemoSaved?.(msg.path);
        break;
      case "error":
        this.awaitingState = false; // a rejected control still frees the slot
        this.events.onError?.(msg.message);
        break;
    }
  }
}
