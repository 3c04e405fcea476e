"""Telemetry records, flight logs and CSV export.

Wire and log format: newline-delimited JSON objects, UTF-8, one record per
line. Every record carries the schema version tag ``v``. A flight log starts
with a ``kind: "header"`` record followed by frame records in time order;
replaying a log reproduces the identical frame sequence. Frames are built
from plain deterministic values so that fixed-seed runs produce bit-identical
logs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "t",
    "phase",
    "alpha",
    "truth_com_x",
    "truth_com_y",
    "truth_com_z",
    "truth_yaw",
    "truth_pitch",
    "truth_roll",
    "est_com_x",
    "est_com_y",
    "est_com_z",
    "est_yaw",
    "est_pitch",
    "est_roll",
    "ref_x",
    "ref_y",
    "ref_z",
    "jet1_thrust",
    "jet2_thrust",
    "jet3_thrust",
    "jet4_thrust",
    "jet1_est",
    "jet2_est",
    "jet3_est",
    "jet4_est",
    "u1",
    "u2",
    "u3",
    "u4",
    "contact",
]


def _floats(values) -> list[float]:
    if isinstance(values, np.ndarray):
        return values.astype(float).ravel().tolist()
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


@dataclass(frozen=True)
class TelemetryFrame:
    """One timestamped snapshot of truth, estimates, commands and phase."""

    t: float
    phase: str
    alpha: float
    truth_com: list[float]
    truth_euler: list[float]
    est_com: list[float]
    est_euler: list[float]
    est_cov_diag: list[float]  # pose-filter error variances (dp, dtheta, dv, domega)
    jet_thrust: list[float]
    jet_thrust_est: list[float]
    jet_cov_trace: list[float]
    jet_throttle: list[float]
    jet_rpm: list[float]
    jet_nis: list[float]
    ref_com: list[float]
    tracking_error: list[float]
    mpc_iterations: int
    mpc_status: str
    mpc_cost: float
    mpc_solve_ms: float
    contact: bool
    log_ok: bool = True
    shutdown_reason: str | None = None
    v: int = SCHEMA_VERSION

    @staticmethod
    def build(
        t,
        phase,
        alpha,
        truth_com,
        truth_euler,
        est_com,
        est_euler,
        est_cov_diag,
        jet_thrust,
        jet_thrust_est,
        jet_cov_trace,
        jet_throttle,
        jet_rpm,
        jet_nis,
        ref_com,
        mpc_iterations,
        mpc_status,
        mpc_cost,
        mpc_solve_ms,
        contact,
        log_ok=True,
        shutdown_reason=None,
    ) -> "TelemetryFrame":
        truth_com = _floats(truth_com)
        ref_com = _floats(ref_com)
        return TelemetryFrame(
            t=float(t),
            phase=str(phase),
            alpha=float(alpha),
            truth_com=truth_com,
            truth_euler=_floats(truth_euler),
            est_com=_floats(est_com),
            est_euler=_floats(est_euler),
            est_cov_diag=_floats(est_cov_diag),
            jet_thrust=_floats(jet_thrust),
            jet_thrust_est=_floats(jet_thrust_est),
            jet_cov_trace=_floats(jet_cov_trace),
            jet_throttle=_floats(jet_throttle),
            jet_rpm=_floats(jet_rpm),
            jet_nis=_floats(jet_nis),
            ref_com=ref_com,
            tracking_error=[a - b for a, b in zip(truth_com, ref_com)],
            mpc_iterations=int(mpc_iterations),
            mpc_status=str(mpc_status),
            mpc_cost=float(mpc_cost),
            mpc_solve_ms=float(mpc_solve_ms),
            contact=bool(contact),
            log_ok=bool(log_ok),
            shutdown_reason=shutdown_reason,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "TelemetryFrame":
        data = json.loads(line)
        version = data.pop("v", None)
        if version != SCHEMA_VERSION:
            raise DomainError(f"telemetry schema version mismatch: got {version}, expected {SCHEMA_VERSION}")
        return TelemetryFrame(v=SCHEMA_VERSION, **data)


def header_record(seed: int | None = None, scenario: str | None = None) -> str:
    record = {"v": SCHEMA_VERSION, "kind": "header", "seed": seed, "scenario": scenario}
    return json.dumps(record, separators=(",", ":"))


class FlightLog:
    """Append-only frame log; a write failure disables logging but not the run."""

    def __init__(self, path, seed: int | None = None, scenario: str | None = None):
        self.path = path
        self.ok = True
        try:
            self._fh = open(path, "w", encoding="utf-8", newline="\n")
            self._fh.write(header_record(seed, scenario) + "\n")
        except OSError:
            self.ok = False
            self._fh = None

    def append(self, frame: TelemetryFrame) -> None:
        if not self.ok:
            return
        try:
            self._fh.write(frame.to_json() + "\n")
        except OSError:
            self.ok = False
            try:
                self._fh.close()
            except OSError:
                pass
            self._fh = None

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_flight_log(path) -> tuple[dict, list[TelemetryFrame]]:
    """(header record, frames) from a log file."""
    frames = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if data.get("kind") == "header":
                if data.get("v") != SCHEMA_VERSION:
                    raise DomainError(f"flight log schema version {data.get('v')} != {SCHEMA_VERSION}")
                header = data
                continue
            frames.append(TelemetryFrame.from_json(line))
    if header is None:
        raise DomainError(f"{path}: not a flight log (missing header record)")
    return header, frames


def export_csv(frames, path) -> None:
    """Core channels with the documented fixed header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for f in frames:
            row = [
                f.t,
                f.phase,
                f.alpha,
                *f.truth_com,
                *f.truth_euler,
                *f.est_com,
                *f.est_euler,
                *f.ref_com,
                *f.jet_thrust,
                *f.jet_thrust_est,
                *f.jet_throttle,
                int(f.contact),
            ]
            fh.write(",".join(str(v) for v in row) + "\n")
