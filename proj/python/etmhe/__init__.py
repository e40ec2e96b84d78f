"""Event-triggered moving horizon estimation."""

from ._core import (
    CertificateError,
    ConfigError,
    IossCertificate,
    SimConfig,
    StabilityError,
    check_dissipation,
    min_horizon,
    parse_config,
    rges_constants,
    run_alpha_sweep,
    run_closed_loop,
    verify_proposition1,
)

__all__ = [
    "CertificateError",
    "ConfigError",
    "IossCertificate",
    "SimConfig",
    "StabilityError",
    "check_dissipation",
    "min_horizon",
    "parse_config",
    "rges_constants",
    "run_alpha_sweep",
    "run_closed_loop",
    "verify_proposition1",
]
