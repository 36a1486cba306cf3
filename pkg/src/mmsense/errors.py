"""Exception types raised across the package."""


class MMSenseError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(MMSenseError, ValueError):
    """Two points that must be distinct coincide (BS/target/scatterer/estimate)."""


class ModelViolationError(MMSenseError, ValueError):
    """A path falls outside the validity region of the post-ZF phase-ramp model."""


class DivisionHazardError(MMSenseError, ValueError):
    """Zero-forcing would divide by a (near-)zero modulation symbol."""


class FitDegenerateError(MMSenseError, ValueError):
    """Too few usable samples for the Gaussian profile fit."""


class NoMeasurementError(MMSenseError, ValueError):
    """Fusion was requested without any detected BS measurement."""


class ConfigError(MMSenseError, ValueError):
    """Invalid or incomplete scenario configuration."""
