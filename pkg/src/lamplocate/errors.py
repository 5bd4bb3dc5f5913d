"""Exception types shared across the pipeline stages."""


class LampLocateError(Exception):
    """Base class for all pipeline errors."""


class EmptyInput(LampLocateError):
    """An operation that needs at least one element received none (or zero total weight)."""


class DegenerateAverage(LampLocateError):
    """Rotation average is not unique (tied singular values with non-positive determinant)."""


class NonPositiveDepth(LampLocateError):
    """A point at or behind the camera plane cannot be projected."""


class DegenerateProjection(LampLocateError):
    """An edge endpoint lies at or behind the camera plane."""


class EmptyTemplate(LampLocateError):
    """No visible edge samples survived for this viewpoint."""


class NoThreshold(LampLocateError):
    """The histogram admits no lower/upper threshold (all-bright or all-dark frame)."""


class TooFewPoints(LampLocateError):
    """Not enough input points for the requested fit or score."""


class NoConvergence(LampLocateError):
    """Iterative optimization exhausted its iteration budget."""


class BehindCamera(LampLocateError):
    """A pose solution places the object surface at non-positive depth."""


class NoTemplates(LampLocateError):
    """No database template is close enough to any pose candidate."""


class EmptyROI(LampLocateError):
    """No edge segments were found inside the region of interest."""


class OutOfROI(LampLocateError):
    """A template placement falls outside the tensor's region of interest."""


class OutOfRange(LampLocateError):
    """A timestamp lies outside the trajectory's time span."""


class DegenerateGeometry(LampLocateError):
    """Point-in-polyhedron ray test kept hitting edges/vertices after all jitter retries."""


class UnknownModel(LampLocateError):
    """A detection references a model id that is not in the model set."""


class DanglingReference(LampLocateError):
    """A space link references a lighting system id that does not exist."""


class NoROI(LampLocateError):
    """Benchmark ROI mode requested but the image produced no regions of interest."""
