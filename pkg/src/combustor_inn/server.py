"""Read-only HTTP service over trained models for interactive design exploration.

Endpoints (all JSON):

    GET  /ranges        valid parameter box, hole-count choices, label bounds
    GET  /model/info    flow config, loss weights, surrogate errors, version
    POST /generate      {"targets": {"U_M","dp_rel","G"}, "count", "seed"?}
                        -> designs with surrogate labels, validity flags, distance
    POST /validate      {"designs": [{param: value, ...}]} -> oracle labels
    POST /baseline      {"targets": ..., "count", "seed"?} -> GP-descent designs

Handlers never mutate server state (the GP triple for /baseline is fitted
lazily once, then reused), so concurrent requests are safe.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import gp as gp_mod
from .domain import (
    LABEL_NAMES,
    PARAM_BOUNDS,
    PARAM_NAMES,
    LabeledDataset,
    N_H_INDEX,
    RangeError,
    oracle_evaluate,
    params_valid_mask,
    validate_params,
)
from .flow import InnModel, inn_inverse
from .surrogate import SurrogateTriple, predict_labels
from .workflow import G_CLIP, TOOL_VERSION

MAX_COUNT = 100_000
# targets may overshoot the observed label range by this fraction of the range
TARGET_SLACK = 0.25


class RequestError(ValueError):
    """Invalid client request; maps to HTTP 400."""


class DesignService:
    def __init__(
        self,
        model: InnModel,
        surrogates: SurrogateTriple,
        baseline_data: LabeledDataset | None = None,
    ):
        if model.y_min is None or model.y_max is None:
            raise ValueError("model must carry label bounds to serve")
        self.model = model
        self.surrogates = surrogates
        self.baseline_data = baseline_data
        self._gp_triple: gp_mod.GpTriple | None = None
        self._gp_lock = threading.Lock()

    # ------------------------------------------------------------------- GETs

    def ranges(self) -> dict:
        return {
            "params": {name: list(PARAM_BOUNDS[name]) for name in PARAM_NAMES},
            "n_h_values": list(range(2, 11)),
            "labels": {
                name: [float(self.model.y_min[j]), float(self.model.y_max[j])]
                for j, name in enumerate(LABEL_NAMES)
            },
        }

    def model_info(self) -> dict:
        config = self.model.config
        return {
            "tool_version": TOOL_VERSION,
            "flow": {
                "n_blocks": config.n_blocks,
                "width": config.width,
                "alpha": config.alpha,
                "dim": config.dim,
                "label_dim": config.label_dim,
            },
            "loss_weights": [
                self.model.loss_weights.lam_x,
                self.model.loss_weights.lam_y,
                self.model.loss_weights.lam_z,
            ],
            "surrogate_test_mae": [float(v) for v in self.surrogates.test_mae],
            "label_ranges": [float(v) for v in self.surrogates.label_ranges],
            "baseline_available": self.baseline_data is not None,
        }

    # ------------------------------------------------------------------ POSTs

    def _parse_targets(self, payload: dict) -> np.ndarray:
        targets = payload.get("targets")
        if not isinstance(targets, dict):
            raise RequestError("missing 'targets' object")
        values = []
        for j, name in enumerate(LABEL_NAMES):
            if name not in targets:
                raise RequestError(f"targets must include {name}")
            try:
                value = float(targets[name])
            except (TypeError, ValueError):
                raise RequestError(f"target {name} must be a number") from None
            if not np.isfinite(value):
                raise RequestError(f"target {name} must be finite")
            span = float(self.model.y_max[j] - self.model.y_min[j])
            lo = float(self.model.y_min[j]) - TARGET_SLACK * span
            hi = float(self.model.y_max[j]) + TARGET_SLACK * span
            if not lo <= value <= hi:
                raise RequestError(
                    f"target {name}={value} outside the supported range [{lo:.4g}, {hi:.4g}]"
                )
            values.append(value)
        return np.array(values)

    def _parse_count(self, payload: dict) -> int:
        count = payload.get("count")
        if not isinstance(count, int) or isinstance(count, bool) or not 1 <= count <= MAX_COUNT:
            raise RequestError(f"count must be an integer in [1, {MAX_COUNT}]")
        return count

    def generate(self, payload: dict) -> dict:
        y_target = self._parse_targets(payload)
        count = self._parse_count(payload)
        seed = int(payload.get("seed", 0))
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((count, self.model.config.latent_dim))
        raw = inn_inverse(self.model, y_target, z)
        raw[:, N_H_INDEX] = np.rint(raw[:, N_H_INDEX])
        valid_mask = params_valid_mask(raw)

        labels = np.full((count, 3), np.nan)
        if valid_mask.any():
            labels[valid_mask] = predict_labels(self.surrogates, raw[valid_mask])
        distance = np.full(count, np.inf)
        if valid_mask.any():
            normalized = (labels[valid_mask] - y_target) / self.surrogates.label_ranges
            distance[valid_mask] = np.sqrt((normalized**2).sum(axis=1))

        order = np.argsort(np.where(valid_mask, distance, np.inf), kind="stable")
        designs = []
        for i in order:
            entry = {
                "params": {name: float(raw[i, j]) for j, name in enumerate(PARAM_NAMES)},
                "valid": bool(valid_mask[i]),
                "predicted_labels": None
                if not valid_mask[i]
                else {name: float(labels[i, j]) for j, name in enumerate(LABEL_NAMES)},
                "distance": None if not valid_mask[i] else float(distance[i]),
            }
            entry["params"]["N_H"] = int(raw[i, N_H_INDEX])
            designs.append(entry)
        return {
            "designs": designs,
            "yield": float(valid_mask.mean()),
            "count": count,
            "seed": seed,
        }

    def validate(self, payload: dict) -> dict:
        designs = payload.get("designs")
        if not isinstance(designs, list) or not designs:
            raise RequestError("missing non-empty 'designs' list")
        rows = []
        for entry in designs:
            if not isinstance(entry, dict):
                raise RequestError("each design must be an object of parameter values")
            try:
                rows.append([float(entry[name]) for name in PARAM_NAMES])
            except (KeyError, TypeError, ValueError):
                raise RequestError(
                    f"each design needs numeric fields {', '.join(PARAM_NAMES)}"
                ) from None
        arr = np.asarray(rows)
        try:
            validate_params(arr, name="designs")
        except RangeError as exc:
            raise RequestError(str(exc)) from None
        labels = oracle_evaluate(arr)
        return {
            "labels": [
                {
                    "U_M": float(row[0]),
                    "dp_rel": float(row[1]),
                    "G": float(min(row[2], G_CLIP)),
                    "g_clipped": bool(row[2] > G_CLIP),
                }
                for row in labels
            ]
        }

    def _gp(self) -> gp_mod.GpTriple:
        if self.baseline_data is None:
            raise RequestError("baseline is not configured on this server (no dataset)")
        with self._gp_lock:
            if self._gp_triple is None:
                self._gp_triple = gp_mod.fit_label_gps(self.baseline_data)
        return self._gp_triple

    def baseline(self, payload: dict) -> dict:
        y_target = self._parse_targets(payload)
        count = self._parse_count(payload)
        if count > 500:
            raise RequestError("baseline count is limited to 500 descent starts")
        seed = int(payload.get("seed", 0))
        triple = self._gp()
        result = gp_mod.gp_inverse_design(triple, y_target, n_starts=count, seed=seed)
        candidates = result["candidates"]
        labels = (
            gp_mod.gp_predict_labels(triple, candidates)
            if len(candidates)
            else np.zeros((0, 3))
        )
        return {
            "designs": [
                {
                    "params": {
                        name: (int(row[j]) if name == "N_H" else float(row[j]))
                        for j, name in enumerate(PARAM_NAMES)
                    },
                    "predicted_labels": {
                        name: float(labels[i, j]) for j, name in enumerate(LABEL_NAMES)
                    },
                    "residual": float(result["residuals"][i]),
                }
                for i, row in enumerate(candidates)
            ],
            "yield": result["yield_rate"],
            "seed": seed,
        }


# ----------------------------------------------------------------------- HTTP


def build_http_server(service: DesignService, host: str = "127.0.0.1", port: int = 0):
    """ThreadingHTTPServer wired to the service; port 0 picks a free port."""

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # tests and CLI stay quiet
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()

        def do_GET(self):
            if self.path == "/ranges":
                self._send(200, service.ranges())
            elif self.path == "/model/info":
                self._send(200, service.model_info())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            routes = {
                "/generate": service.generate,
                "/validate": service.validate,
                "/baseline": service.baseline,
            }
            handler = routes.get(self.path)
            if handler is None:
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                if not isinstance(payload, dict):
                    raise RequestError("request body must be a JSON object")
            except json.JSONDecodeError as exc:
                self._send(400, {"error": f"invalid JSON: {exc}"})
                return
            try:
                self._send(200, handler(payload))
            except RequestError as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # defensive: surface as 500, keep serving
                self._send(500, {"error": f"internal error: {exc}"})

    return ThreadingHTTPServer((host, port), Handler)
