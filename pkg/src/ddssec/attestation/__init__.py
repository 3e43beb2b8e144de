"""Runtime integrity measurement, quotes and appraisal."""
from .appraise import Appraisal, GoldenDb, appraise, check_attributes, protect_attributes
from .ima import MeasurementEntry, MeasurementLog, format_line, parse_ima_signature, parse_line
from .monitor import IntegrityMonitor, expected_bank
from .pcr import PcrBank, pcr_extend
from .quote import Quote, quote, verify_quote

__all__ = [
    "Appraisal", "GoldenDb", "appraise", "check_attributes", "protect_attributes",
    "MeasurementEntry", "MeasurementLog", "format_line", "parse_ima_signature", "parse_line",
    "IntegrityMonitor", "expected_bank", "PcrBank", "pcr_extend", "Quote", "quote", "verify_quote",
]
