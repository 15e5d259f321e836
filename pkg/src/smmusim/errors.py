"""Exception hierarchy shared by all simulator modules."""


class SmmuSimError(Exception):
    """Base class for configuration and harness errors.

    Translation faults are never raised; they come back as outcome values.
    """


# physical memory
class AddressOutOfRange(SmmuSimError):
    pass


class AllocatorExhausted(SmmuSimError):
    pass


# translation tables
class MisalignedAddress(SmmuSimError):
    pass


class InputOutOfRange(SmmuSimError):
    pass


class OutputOutOfRange(SmmuSimError):
    pass


class Remap(SmmuSimError):
    pass


class NotMapped(SmmuSimError):
    pass


class UnsupportedGranule(SmmuSimError):
    pass


class InvalidWalkConfig(SmmuSimError):
    pass


# stream mapping
class FieldOutOfRange(SmmuSimError):
    pass


class IndexOutOfRange(SmmuSimError):
    pass


class UnsupportedFeature(SmmuSimError):
    pass


class WrongStreamMode(SmmuSimError):
    pass


# context banks
class ReservedEncoding(SmmuSimError):
    pass


class InvalidT0sz(SmmuSimError):
    pass


class BankNotAllocated(SmmuSimError):
    pass


class NoFreeBank(SmmuSimError):
    pass


# iommu api
class DuplicateDevice(SmmuSimError):
    pass


class UnknownDevice(SmmuSimError):
    pass


class GroupBusy(SmmuSimError):
    pass


class NotAttached(SmmuSimError):
    pass


class AlreadyAttached(SmmuSimError):
    pass


class NoFreeStreamEntry(SmmuSimError):
    pass


class ExternalTableReadOnly(SmmuSimError):
    pass


# devices
class ChannelDisabled(SmmuSimError):
    pass


class BadRegisterOffset(SmmuSimError):
    pass


# device tree
class DtsError(SmmuSimError):
    pass


class ParseError(DtsError):
    def __init__(self, msg, line=None, col=None):
        self.msg = msg
        self.line = line
        self.col = col
        if line is not None:
            msg = f"{line}:{col}: {msg}"
        super().__init__(msg)


class UnresolvedPhandle(DtsError):
    pass
