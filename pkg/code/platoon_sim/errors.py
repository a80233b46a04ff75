"""
Exception hierarchy for the platoon simulator

Every error raised by the package derives from PlatoonSimError. Errors
that describe a bad argument also derive from the matching builtin
(ValueError or KeyError) so callers that only know the builtins still
catch them.

Author: Platoon-Sim Team
Version: 1.0.0
"""

from typing import Optional


class PlatoonSimError(Exception):
    """Base class of all simulator errors"""


# --- geometry -------------------------------------------------------------

class GeometryError(PlatoonSimError):
    """Base class for planar geometry failures"""


class NoCscSolution(GeometryError, ValueError):
    """No curve-straight-curve word connects the two poses"""


# --- road network ---------------------------------------------------------

class RoadNetworkError(PlatoonSimError):
    """Base class for road network construction and query errors"""


class InvalidSpec(RoadNetworkError, ValueError):
    """A SegmentSpec violates one of its invariants"""


class UnknownSegment(RoadNetworkError, KeyError):
    """Segment id is not registered in the network"""


class UnknownConnectionPoint(RoadNetworkError, KeyError):
    """Connection point name does not exist on the segment"""


class Incompatible(RoadNetworkError, ValueError):
    """Lane count or lane width differ between two segments"""


class AlreadyConnected(RoadNetworkError, ValueError):
    """A connection point already has a peer"""


class WouldTearJoint(RoadNetworkError, ValueError):
    """Moving a segment would break one of its existing joints"""


class UnknownLane(RoadNetworkError, ValueError):
    """Lane index outside 1..lanes"""


# --- dynamics -------------------------------------------------------------

class DynamicsError(PlatoonSimError):
    """Base class for vehicle dynamics errors"""


class NonFiniteState(DynamicsError, ArithmeticError):
    """Integration produced NaN or Inf"""


# --- guidance -------------------------------------------------------------

class GuidanceError(PlatoonSimError):
    """Base class for route and reference trajectory errors"""


class NoSuchLane(GuidanceError, ValueError):
    """Lane change would leave the road"""


class DeadEnd(GuidanceError):
    """Route runs out of road before the horizon is reached"""


class InvalidPrimitive(GuidanceError, ValueError):
    """Turn primitive used outside an intersection"""


class EmptyAhead(GuidanceError):
    """No trajectory point lies ahead of the vehicle"""


# --- control --------------------------------------------------------------

class ControlError(PlatoonSimError):
    """Base class for controller errors"""


class EmptyTrajectory(ControlError, ValueError):
    """Controller received a trajectory without points"""


class CyclicLeadership(ControlError, ValueError):
    """Platoon directives form a leader cycle"""


# --- engine ---------------------------------------------------------------

class EngineError(PlatoonSimError):
    """Base class for traffic environment errors"""


class DuplicateId(EngineError, ValueError):
    """Vehicle id already registered"""


class ControllerAmbiguity(EngineError, ValueError):
    """Both or neither controller forms were supplied"""


class OffRoadSpawn(EngineError, ValueError):
    """Requested spawn pose is not on the drivable band"""


class SpawnConflict(EngineError, ValueError):
    """Another active vehicle is too close to the spawn point"""


class BlockedExit(EngineError):
    """Parking lot exit point is occupied at release time"""


class UnknownVehicle(EngineError, KeyError):
    """Vehicle id is not registered"""


# --- scenario -------------------------------------------------------------

class ScenarioError(PlatoonSimError):
    """Base class for scenario file errors"""


class ParseError(ScenarioError, ValueError):
    """Scenario file is not well-formed YAML

    Attributes:
        line: 1-based line of the problem, if known
        column: 1-based column of the problem, if known
    """

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ScenarioError, ValueError):
    """Scenario content is well-formed but invalid

    Attributes:
        key: dotted path of the offending key, e.g. ``connections[0].fixed``
    """

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
