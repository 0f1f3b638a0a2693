"""Local read-mostly HTTP service over run directories.

Readers get immutable snapshots (raw file bytes, so responses equal the
artifacts on disk).  Interventions go through a single-writer queue: each
POST rebuilds into a brand new run directory and returns its id; the baseline
is never mutated.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .atlas import diff_worlds
from .cli import StageError, run_intervention
from .core import canonical_json
from .export import import_bundle
from .intervene import InterventionSpec


class RunRegistry:
    """Run directories under one root; rebuilds serialized by a lock."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.exists():
            raise OSError(f"runs directory not found: {self.root}")
        self._write_lock = threading.Lock()

    def run_ids(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if (p / "bundle.json").exists()
        )

    def run_dir(self, run_id: str) -> Optional[Path]:
        path = self.root / run_id
        if path.is_dir() and (path / "bundle.json").exists():
            return path
        return None

    def intervene(self, run_id: str, spec_data: dict) -> str:
        base = self.run_dir(run_id)
        if base is None:
            raise KeyError(run_id)
        spec = InterventionSpec.from_dict(spec_data)
        with self._write_lock:
            new_id = f"{run_id}-do-{len(self.run_ids()):03d}"
            out_dir, _ = run_intervention(base, spec, self.root / new_id, spec_base=self.root)
        return out_dir.name


class AtlasHandler(BaseHTTPRequestHandler):
    registry: RunRegistry  # set by serve()

    # -- helpers ----------------------------------------------------------
    def _send(self, status: int, payload: bytes, content_type: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        # local UI may be served from another origin (dev server, file dist)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def _json(self, status: int, obj) -> None:
        self._send(status, canonical_json(obj).encode("utf-8"))

    def _file(self, path: Path) -> None:
        self._send(200, path.read_bytes())

    def _not_found(self, what: str) -> None:
        self._json(404, {"error": f"not found: {what}"})

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- routes -----------------------------------------------------------
    def do_GET(self) -> None:
        parts = [urllib.parse.unquote(p) for p in self.path.rstrip("/").split("/") if p]
        try:
            if parts == ["runs"] or not parts:
                runs = []
                for rid in self.registry.run_ids():
                    with open(self.registry.run_dir(rid) / "bundle.json", encoding="utf-8") as f:
                        summary = json.load(f).get("summary", {})
                    runs.append({"id": rid, "summary": summary})
                return self._json(200, {"runs": runs})

            if parts[0] != "runs" or len(parts) < 2:
                return self._not_found(self.path)
            run_dir = self.registry.run_dir(parts[1])
            if run_dir is None:
                return self._not_found(f"run {parts[1]}")

            if len(parts) == 2:
                return self._file(run_dir / "bundle.json")
            if parts[2] == "atlas" and len(parts) == 3:
                return self._file(run_dir / "atlas.json")
            if parts[2] == "diagnostics" and len(parts) == 3:
                return self._file(run_dir / "diagnostics.json")
            if parts[2] == "state" and len(parts) == 3:
                return self._file(run_dir / "state.json")
            if parts[2] == "html" and len(parts) == 3:
                return self._send(200, (run_dir / "atlas.html").read_bytes(), "text/html")
            if parts[2] == "contexts" and len(parts) == 4:
                return self._context_detail(run_dir, parts[3])
            if parts[2] == "diff" and len(parts) == 4:
                other = self.registry.run_dir(parts[3])
                if other is None:
                    return self._not_found(f"run {parts[3]}")
                report = diff_worlds(import_bundle(run_dir), import_bundle(other))
                return self._json(200, report.to_dict())
            return self._not_found(self.path)
        except BrokenPipeError:
            pass
        except Exception as exc:
            self._json(500, {"error": str(exc)})

    def _context_detail(self, run_dir: Path, context_id: str) -> None:
        with open(run_dir / "bundle.json", encoding="utf-8") as f:
            bundle = json.load(f)
        for psr in bundle.get("psrs", []):
            if psr["context_id"] == context_id:
                diagnostics = {
                    "restrictions": [
                        r
                        for r in bundle["diagnostics"]["restrictions"]
                        if context_id in (r["source"], r["target"])
                    ],
                    "overlaps": [
                        o
                        for o in bundle["diagnostics"]["overlaps"]
                        if context_id in o["pair"]
                    ],
                }
                return self._json(200, {"psr": psr, "diagnostics": diagnostics})
        return self._not_found(f"context {context_id}")

    def do_POST(self) -> None:
        parts = [urllib.parse.unquote(p) for p in self.path.rstrip("/").split("/") if p]
        if len(parts) != 3 or parts[0] != "runs" or parts[2] != "interventions":
            return self._not_found(self.path)
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length) if length else b"{}"
        try:
            spec_data = json.loads(body)
        except json.JSONDecodeError as exc:
            return self._json(400, {"error": f"malformed spec JSON: {exc.msg}", "stage": "parse"})
        try:
            new_id = self.registry.intervene(parts[1], spec_data)
        except KeyError:
            return self._not_found(f"run {parts[1]}")
        except StageError as exc:
            return self._json(400, {"error": str(exc), "stage": exc.stage})
        except (ValueError, OSError) as exc:
            return self._json(400, {"error": str(exc), "stage": "validate"})
        return self._json(200, {"new_run_id": new_id})


def make_server(runs_dir: str | Path, port: int = 0) -> ThreadingHTTPServer:
    registry = RunRegistry(runs_dir)
    handler = type("BoundAtlasHandler", (AtlasHandler,), {"registry": registry})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(runs_dir: str | Path, port: int = 8787) -> None:
    server = make_server(runs_dir, port)
    print(f"serving {runs_dir} on http://127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
