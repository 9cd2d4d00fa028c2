"""Exception hierarchy shared by every module."""


class ContactRadiusError(Exception):
    """Base class; the CLI maps every subclass to exit code 2."""


class ExprSyntaxError(ContactRadiusError):
    def __init__(self, position: int, expected: str, text: str = ""):
        self.position = position
        self.expected = expected
        self.text = text
        where = "end-of-input" if position >= len(text) else f"position {position}"
        super().__init__(f"syntax error at {where}: expected {expected}")


class UnknownIdentifier(ContactRadiusError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at position {position}")


class DomainError(ContactRadiusError):
    def __init__(self, message: str, subexpression: str = ""):
        self.subexpression = subexpression
        if subexpression:
            message = f"{message} in {subexpression!r}"
        super().__init__(message)


class OutsideChart(DomainError):
    pass


class NotPositiveDefinite(ContactRadiusError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"metric not positive definite at {list(point)}")


class DegeneratePlane(ContactRadiusError):
    pass


class NotUnit(ContactRadiusError):
    pass


class NotContact(ContactRadiusError):
    def __init__(self, point, detail: str = ""):
        self.point = point
        super().__init__(f"form is not contact at {list(point)} {detail}".rstrip())


class NotInXi(ContactRadiusError):
    pass


class NotCompatible(ContactRadiusError):
    pass


class OutOfRange(ContactRadiusError):
    pass


class InvalidInputs(ContactRadiusError):
    pass


class LeftChartDomain(ContactRadiusError):
    def __init__(self, s: float):
        self.s = s
        super().__init__(f"trajectory left the chart domain at s = {s:.6g}")


class StepFailure(ContactRadiusError):
    pass


class RadiusTooLarge(ContactRadiusError):
    pass


class OrbitNotClosed(ContactRadiusError):
    pass


class UnknownModel(ContactRadiusError):
    pass


class ManifestError(ContactRadiusError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
