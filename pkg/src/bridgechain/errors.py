"""Exception hierarchy.

Every error raised by the package derives from :class:`BridgeChainError` and
carries a ``module`` prefix so the CLI can report where a failure came from.
"""


class BridgeChainError(Exception):
    module = "bridgechain"

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.module}: {msg}" if msg else self.module


class NotFound(BridgeChainError):
    """Lookup of a block, transaction, account, contract or row failed."""


# shm-core

class ShmError(BridgeChainError):
    module = "shm"


class NonFinite(ShmError, ValueError):
    pass


class TooSmall(ShmError, ValueError):
    pass


class ZeroMatrix(ShmError, ValueError):
    pass


class SvdFailure(ShmError, ArithmeticError):
    pass


class EmptyBaseline(ShmError, ValueError):
    pass


class DimensionMismatch(ShmError, ValueError):
    pass


class BadCalibration(ShmError, ValueError):
    pass


class AllZero(ShmError, ValueError):
    pass


class BadThreshold(ShmError, ValueError):
    pass


# chain-sim

class ChainError(BridgeChainError):
    module = "chain"


class InvalidName(ChainError, ValueError):
    pass


class DuplicateName(ChainError):
    pass


class UnknownAccount(ChainError):
    pass


class OversizedTransaction(ChainError):
    pass


class NotSlotBoundary(ChainError):
    pass


class SlotOccupied(NotSlotBoundary):
    """A block already exists at (or after) the requested slot."""


class MissedSlot(NotSlotBoundary):
    """The requested slot skips the next expected slot."""


class WrongProducer(ChainError):
    pass


class UnknownProducer(ChainError):
    pass


class PrematureStage2(ChainError):
    pass


class ChainNotFound(ChainError, NotFound):
    pass


# contract-vm

class ContractError(BridgeChainError):
    module = "contract"


class DuplicateContract(ContractError):
    pass


class MalformedName(ContractError, ValueError):
    pass


class AuthFailure(ContractError, PermissionError):
    pass


class DuplicateKey(ContractError):
    pass


class InvalidRecord(ContractError, ValueError):
    pass


class StaleReference(ContractError):
    pass


class ContractNotFound(ContractError, NotFound):
    pass


# ingest

class IngestError(BridgeChainError):
    module = "ingest"


class MalformedCsv(IngestError, ValueError):
    pass


class RaggedRows(MalformedCsv):
    pass


class FrameTooLarge(IngestError):
    pass


class InsufficientFrames(IngestError):
    pass


class BadDimensions(IngestError, ValueError):
    pass


# bench

class BenchError(BridgeChainError):
    module = "bench"


class ScenarioTooLarge(BenchError):
    pass


class InvalidScenario(BenchError, ValueError):
    pass


class MixedAxes(BenchError, ValueError):
    pass


class Underspecified(MixedAxes):
    """Fewer than two configs, or no axis varies."""


class ConfigMismatch(BenchError, ValueError):
    pass


# cli config

class ConfigError(BridgeChainError, ValueError):
    module = "config"
