import email.parser
import email.policy
import http.server
import os
import sys
import threading

import pytest

sys.path.insert(0, os.path.dirname(__file__))


class _Handler(http.server.BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        server = self.server
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        ctype = self.headers.get("Content-Type", "")
        parts = {}
        if ctype.startswith("multipart/form-data"):
            msg = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(
                f"Content-Type: {ctype}\r\n\r\n".encode() + body)
            for part in msg.iter_parts():
                name = part.get_param("name", header="content-disposition")
                data = part.get_payload(decode=True)
                parts[name] = data if part.get_filename() else data.decode()
        with server.lock:
            server.requests.append({"path": self.path, "content_type": ctype, "body": body, "parts": parts})
            n = len(server.requests)
        status, headers, payload = server.responder(n, body, parts)
        self.send_response(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


class StubServer:
    """Threaded local HTTP server; ``responder(n, body, parts)`` returns
    ``(status, headers, payload)`` for the n-th request."""

    def __init__(self):
        self.httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.requests = []
        self.httpd.lock = threading.Lock()
        self.httpd.responder = lambda n, body, parts: (200, {}, b"")
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/"

    @property
    def requests(self):
        return self.httpd.requests

    def respond(self, fn):
        self.httpd.responder = fn

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    s = StubServer()
    yield s
    s.close()


def closed_port_url():
    import socket

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return f"http://127.0.0.1:{port}/"
