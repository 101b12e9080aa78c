"""Common errors declarations
"""


class PointAccelError(Exception):
    """Generic error"""

    pass


class _Unknown(PointAccelError):
    """Generic error for unknown argument"""

    def __init__(self, name):
        self.name = name

    @property
    def type(self):
        return self.__class__.__name__[7:-5].lower()

    def __str__(self):
        return f"Unknown {self.type} '{self.name}'"


class UnknownNetworkError(_Unknown):
    """Unknown network kind (vanilla-cls, cls, seg)"""

    pass


class UnknownActivationError(_Unknown):
    """Unknown activation (none, relu, relu6)"""

    pass


class ConfigError(PointAccelError):
    pass


class FormatError(PointAccelError):
    """Invalid fixed-point format"""

    pass


class ShapeError(PointAccelError):
    """Dimensions of operands do not agree"""

    pass


class ProgramError(PointAccelError):
    """Accelerator program failing validation"""

    pass


class WeightStoreError(ProgramError):
    """Duplicate or unbound weight identifier"""

    pass


class CapacityError(PointAccelError):
    """A hardware limit (point count, buffer or weight store size) is exceeded"""

    pass


class StreamClosedError(PointAccelError):
    pass


class ParseError(ValueError):
    pass


class PacketError(ParseError):
    """Invalid sensor packet"""

    pass


class CaptureError(ParseError):
    """Invalid capture file"""

    pass


class ContainerError(ParseError):
    """Invalid weight container"""

    pass


class ReportError(ParseError):
    """Invalid performance report"""

    pass
