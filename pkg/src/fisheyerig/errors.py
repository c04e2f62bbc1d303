"""Exception types shared across the toolkit."""


class FisheyeRigError(Exception):
    """Base class for all toolkit errors."""


class DegeneratePoint(FisheyeRigError):
    """Point lies outside the valid cap of the projection model."""


class NoConvergence(FisheyeRigError):
    """Iterative inversion failed to converge within its iteration cap."""


class AntipodalRotations(FisheyeRigError):
    """Rotation midpoint is ambiguous (inputs differ by exactly 180 deg)."""


class NonPositiveDepth(FisheyeRigError):
    """Requested a point at non-positive depth along a viewing ray."""


class DegenerateConfiguration(FisheyeRigError):
    """Input configuration does not determine a unique solution."""


class NoRealRoot(FisheyeRigError):
    """Polynomial elimination produced no admissible real root."""


class SolverFailure(FisheyeRigError):
    """Minimal solver failed to produce any admissible solution."""


class CollinearPoints(FisheyeRigError):
    """World points are (near-)collinear; pose is not unique."""


class NoPositiveDepth(FisheyeRigError):
    """No solution with all point depths positive."""


class InsufficientMotion(FisheyeRigError):
    """Motion set leaves calibration degrees of freedom unobservable."""


class ParallelRays(FisheyeRigError):
    """Rays are parallel beyond tolerance; triangulation undefined."""


class NoModelFound(FisheyeRigError):
    """Sample consensus found no hypothesis with enough inliers."""


class NotLocalized(FisheyeRigError):
    """Localization rejected the frame (too few inliers). A signal, not a bug."""

    def __init__(self, message, inlier_count=0, candidate_count=0):
        super().__init__(message)
        self.inlier_count = inlier_count
        self.candidate_count = candidate_count


class UnderconstrainedCamera(FisheyeRigError):
    """A camera's extrinsic block is singular in the normal equations."""


class LocalizationFailed(FisheyeRigError):
    """Too few frames of a camera localized against the map."""

    def __init__(self, message, camera_id=None, frame_ratio=0.0):
        super().__init__(message)
        self.camera_id = camera_id
        self.frame_ratio = frame_ratio


class OutOfModel(FisheyeRigError):
    """Warped ray falls outside the target camera model."""


class NoValidSource(FisheyeRigError):
    """Cost aggregation received no valid source entries."""


class BadRange(FisheyeRigError):
    """Invalid near/far range for plane-set construction."""


class ConfigInvalid(FisheyeRigError):
    """Scenario or pipeline configuration is ill-formed."""


class ConfigError(FisheyeRigError):
    """Malformed or unknown configuration input (CLI exit code 2)."""


class StageFailure(FisheyeRigError):
    """A pipeline stage failed (CLI exit code 3)."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
