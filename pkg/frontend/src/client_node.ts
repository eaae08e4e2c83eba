/**
 * Node-only transport: a raw TCP socket to the fleet service's NDJSON
 * port.  Kept out of client.ts so the browser bundle never touches
 * node built-ins.
 */

import net from "node:net";

import type { TransportFactory } from "./client.js";

export function tcpTransport(host: string, port: number): TransportFactory {
  return (handlers) => {
    const sock = net.createConnection({ host, port });
    sock.setEncoding("utf8");
    sock.on("connect", () => handlers.onOpen());
    sock.on("data", (chunk: string | Buffer) => handlers.onData(String(chunk)));
    sock.on("error", () => {
      // close follows; the reconnect loop handles it
    });
    sock.on("close", () => handlers.onClose());
    return {
      send: (data: string) => {
        sock.write(data);
      },
      close: () => {
        sock.destroy();
      },
    };
  };
}
