"""Exception hierarchy.

Every error class carries the process exit code the CLI uses when it escapes
a subcommand, so scripts can branch on the failure class.
"""


class CdsError(Exception):
    exit_code = 1


# ingest
class IngestError(CdsError):
    exit_code = 10


class NonFiniteDepth(IngestError):
    pass


class AllNeighborsInvalid(IngestError):
    pass


class EmptyTrajectory(IngestError):
    exit_code = 11


class TooFewFrames(IngestError):
    exit_code = 12


class PersonNotFound(IngestError):
    exit_code = 13


class SideKeypointsAbsent(IngestError):
    exit_code = 14


class ParseError(IngestError):
    exit_code = 15


# stiffness model
class SingularConfiguration(CdsError):
    exit_code = 20


class NonUnitAxis(CdsError):
    exit_code = 21


class AllFramesSingular(SingularConfiguration):
    exit_code = 22


# spd codec
class NotSPD(CdsError):
    exit_code = 30


class NonFiniteInput(CdsError):
    exit_code = 31


# mixture model
class GmmError(CdsError):
    exit_code = 40


class DegenerateComponent(GmmError):
    exit_code = 41


class EmptyCluster(GmmError):
    exit_code = 42


class SingularData(GmmError):
    exit_code = 43


class IllConditionedBlock(GmmError):
    exit_code = 44


# planner / simulator
class NonPositiveDuration(CdsError):
    exit_code = 50


class NonFiniteState(CdsError):
    exit_code = 60


class InstabilityDetected(CdsError):
    """Tracking error left the configured bound.

    ``log`` holds the simulation log up to and including the offending step.
    """

    exit_code = 61

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class EmptyLog(CdsError):
    exit_code = 62


# configuration
class ConfigError(CdsError):
    exit_code = 2
