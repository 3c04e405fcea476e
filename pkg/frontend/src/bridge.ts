/**
 * Transport bridge: browsers cannot open raw TCP sockets, so this little
 * server pipes the runtime's newline-JSON records verbatim into a
 * server-sent-events stream and forwards posted command records back over
 * the same duplex socket. No control logic, no rendering, no state beyond
 * the reconnecting socket: killing it never alters the run.
 *
 *   GET  /stream   -> text/event-stream, one runtime record per event
 *   POST /command  -> body is one command record, forwarded as one line
 *   GET  /*        -> static files from public/
 */

import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import { LineDecoder } from "./protocol.js";

export interface BridgeOptions {
  gcsHost: string;
  gcsPort: number;
  httpPort: number;
  publicDir: string;
  reconnectMs?: number;
}

const MIME: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".json": "application/json",
};

export class Bridge {
  private options: BridgeOptions;
  private socket: net.Socket | null = null;
  private server: http.Server;
  private subscribers = new Set<http.ServerResponse>();
  private decoder = new LineDecoder();
  private reconnectTimer: NodeJS.Timeout | null = null;
  private closed = false;
  connected = false;

  constructor(options: BridgeOptions) {
    this.options = { reconnectMs: 500, ...options, publicDir: path.resolve(options.publicDir) };
    this.server = http.createServer((req, res) => this.route(req, res));
  }

  async start(): Promise<number> {
    this.connectUpstream();
    await new Promise<void>((resolve) => this.server.listen(this.options.httpPort, "127.0.0.1", resolve));
    const address = this.server.address();
    return typeof address === "object" && address ? address.port : this.options.httpPort;
  }

  stop(): void {
    this.closed = true;
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.socket?.destroy();
    for (const res of this.subscribers) res.end();
    this.subscribers.clear();
    this.server.close();
  }

  private connectUpstream(): void {
    if (this.closed) return;
    const socket = net.createConnection(this.options.gcsPort, this.options.gcsHost);
    socket.setEncoding("utf-8");
    socket.on("connect", () => {
      this.connected = true;
      this.broadcastMeta("upstream_connected");
    });
    socket.on("data", (chunk: string) => {
      for (const line of this.decoder.push(chunk)) {
        this.broadcast(line);
      }
    });
    const retry = () => {
      this.connected = false;
      this.socket = null;
      this.broadcastMeta("upstream_lost");
      if (!this.closed) {
        this.reconnectTimer = setTimeout(() => this.connectUpstream(), this.options.reconnectMs);
      }
    };
    socket.on("error", () => socket.destroy());
    socket.on("close", retry);
    this.socket = socket;
  }

  private broadcast(line: string): void {
    for (const res of this.subscribers) {
      res.write(`data: ${line}\n\n`);
    }
  }

  private broadcastMeta(status: string): void {
    for (const res of this.subscribers) {
      res.write(`event: bridge\ndata: {"status":"${status}"}\n\n`);
    }
  }

  private route(req: http.IncomingMessage, res: http.ServerResponse): void {
    const url = req.url ?? "/";
    if (req.method === "GET" && url === "/stream") {
      res.writeHead(200, {
        "content-type": "text/event-stream",
        "cache-control": "no-cache",
        connection: "keep-alive",
      });
      res.write(`event: bridge\ndata: {"status":"${this.connected ? "upstream_connected" : "upstream_lost"}"}\n\n`);
      this.subscribers.add(res);
      req.on("close", () => this.subscribers.delete(res));
      return;
    }
    if (req.method === "POST" && url === "/command") {
      let body = "";
      req.on("data", (chunk) => (body += chunk));
      req.on("end", () => {
        if (!this.socket || !this.connected) {
          res.writeHead(503, { "content-type": "application/json" });
          res.end('{"error":"runtime not connected"}');
          return;
        }
        this.socket.write(body.trim() + "\n");
        res.writeHead(202, { "content-type": "application/json" });
        res.end('{"queued":true}');
      });
      return;
    }
    if (req.method === "GET") {
      const rel = url === "/" ? "index.html" : url.replace(/^\/+/, "");
      const file = path.join(this.options.publicDir, path.normalize(rel));
      if (!file.startsWith(path.resolve(this.options.publicDir))) {
        res.writeHead(403);
        res.end();
        return;
      }
      fs.readFile(file, (err, data) => {
        if (err) {
          res.writeHead(404);
          res.end("not found");
          return;
        }
        res.writeHead(200, { "content-type": MIME[path.extname(file)] ?? "application/octet-stream" });
        res.end(data);
      });
      return;
    }
    res.writeHead(405);
    res.end();
  }
}

const isMain = process.argv[1] && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isMain) {
  const args = process.argv.slice(2);
  const get = (flag: string, fallback: string) => {
    const idx = args.indexOf(flag);
    return idx >= 0 && args[idx + 1] ? args[idx + 1] : fallback;
  };
  const [host, port] = get("--gcs", "127.0.0.1:9411").split(":");
  const bridge = new Bridge({
    gcsHost: host,
    gcsPort: Number(port),
    httpPort: Number(get("--port", "8080")),
    publicDir: path.resolve(path.dirname(new URL(import.meta.url).pathname), "..", "public"),
  });
  bridge.start().then((p) => console.log(`console bridge on http://127.0.0.1:${p} -> gcs ${host}:${port}`));
}
