"""Framed device-to-gateway protocol and the authentication harness."""

from .devices import (
    AttackStep,
    DetectionScore,
    DeviceSimulator,
    RunSummary,
    parse_script,
    run_devices,
    score_detections,
)
from .registry import DeviceRegistration, ServiceConfig
from .service import (
    LOG_FIELDS,
    FixedPolicy,
    LogWriter,
    MixedPolicy,
    ServiceHandle,
    ServiceSummary,
    audit_budget,
    make_policy,
    serve,
)
from .transport import InProcessTransport, TcpTransport, connect_with_retry, make_transport
from .wire import Frame, FrameDecoder, decode, encode

__all__ = [
    "AttackStep", "DetectionScore", "DeviceRegistration", "DeviceSimulator", "FixedPolicy",
    "Frame", "FrameDecoder", "InProcessTransport", "LOG_FIELDS", "LogWriter", "MixedPolicy",
    "RunSummary", "ServiceConfig", "ServiceHandle", "ServiceSummary", "TcpTransport",
    "audit_budget", "connect_with_retry", "decode", "encode", "make_policy", "make_transport",
    "parse_script", "run_devices", "score_detections", "serve",
]
