"""Launch a throwaway guidance service for the frontend integration tests.

Prints "READY <port> <data_dir>" once listening; killed by the test runner.
"""

import socket
import sys
import tempfile
import threading
import time

import uvicorn

from langboard import datastore, expert, server


def main() -> None:
    data_dir = tempfile.mkdtemp(prefix="langboard-ui-test-")
    store = datastore.EpisodeStore(data_dir)
    expert.generate_corpus(1, seed=77, store=store)

    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()

    app = server.build_app(data_dir=data_dir)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    srv = uvicorn.Server(config)

    def announce():
        while not srv.started:
            time.sleep(0.05)
        print(f"READY {port} {data_dir}", flush=True)

    threading.Thread(target=announce, daemon=True).start()
    srv.run()


if __name__ == "__main__":
    sys.exit(main())
