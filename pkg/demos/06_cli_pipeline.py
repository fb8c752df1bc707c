# %% [markdown]
# # End to end through the command line
#
# Build a small synthetic dataset, generate masks and size-adjusted
# garments, call a local echo server as the try-on backend, then evaluate
# and print the error table.

# %%
import http.server
import os
import subprocess
import sys
import tempfile
import threading

from vtonsize import synthetic

root = tempfile.mkdtemp(prefix="vtonsize-demo-")
layout = synthetic.Layout(height=640, width=600, top=60, torso_half=150, gap=20, sleeve_width=60)
manifest = synthetic.write_dataset(os.path.join(root, "data"), [{"cl": 50, "sl": 40, "sw": 24, "ww": 26}], layout)
out = os.path.join(root, "out")


def run(*args):
    cmd = [sys.executable, "-m", "vtonsize", *args]
    res = subprocess.run(cmd, capture_output=True, text=True)
    print("$ vtonsize", " ".join(args), "->", res.returncode)
    print(res.stdout + res.stderr)
    return res


# %%
run("gen-masks", "--manifest", manifest, "--out", os.path.join(out, "masks"))
run("adjust-garment", "--manifest", os.path.join(out, "masks", "manifest.jsonl"), "--out", os.path.join(out, "garments"))

# %% A stand-in try-on service that answers with the uploaded person image
class Echo(http.server.BaseHTTPRequestHandler):
    def do_POST(self):
        self.rfile.read(int(self.headers["Content-Length"]))
        with open(os.path.join(os.path.dirname(manifest), "p000", "person.png"), "rb") as f:
            png = f.read()
        self.send_response(200)
        self.send_header("X-Backend", "echo-demo")
        self.send_header("Content-Length", str(len(png)))
        self.end_headers()
        self.wfile.write(png)

    def log_message(self, *args):
        pass


server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Echo)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}/"
run("tryon", "--manifest", os.path.join(out, "garments", "manifest.jsonl"), "--out", os.path.join(out, "tryon"), "--backend-url", url)
server.shutdown()

# %% Evaluate the pre-rendered size triplet shipped with the dataset
run("evaluate", "--manifest", manifest, "--out", os.path.join(out, "eval"))
run("report", "--out", os.path.join(out, "eval"))
