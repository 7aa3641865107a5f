"""Value types shared by the simulation and analysis modules."""

from .distribution import DEFAULT_TRUNCATION_THRESHOLD, PhotonDistribution
from .events import Channel, DetectionEvent, Detector, EventStream, Gate, format_channel, parse_channel
from .histogram import CoincidenceHistogram, bins_per_period
from .reports import CorrelationReport, CsReport, CsVerdict, GEstimate, MomentSet

__all__ = [
    'DEFAULT_TRUNCATION_THRESHOLD',
    'PhotonDistribution',
    'Channel',
    'DetectionEvent',
    'Detector',
    'EventStream',
    'Gate',
    'format_channel',
    'parse_channel',
    'CoincidenceHistogram',
    'bins_per_period',
    'CorrelationReport',
    'CsReport',
    'CsVerdict',
    'GEstimate',
    'MomentSet',
]
