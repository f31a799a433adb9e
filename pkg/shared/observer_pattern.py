"""
Observer Pattern Implementation for Per-Iteration Solver Telemetry
"""
from abc import ABC, abstractmethod
from typing import Any, List, TextIO
import csv
import logging

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "step_type", "f", "residual", "t_k", "support_changed", "ge_cum", "cg_cum"]


class Subject(ABC):
    """
    The Subject interface declares methods for managing subscribers (observers).
    """

    @abstractmethod
    def attach(self, observer: 'Observer') -> None:
        """Attach an observer to the subject"""
        pass

    @abstractmethod
    def notify(self, record: Any) -> None:
        """Notify all observers about an event"""
        pass


class Observer(ABC):
    """
    The Observer interface declares the update method used by subjects.
    """

    @abstractmethod
    def update(self, record: Any) -> None:
        """Receive one trace record from the subject"""
        pass


class TraceSubject(Subject):
    """
    Concrete Subject owned by a single solve; fans each trace record out
    to the attached observers in attachment order.
    """

    def __init__(self):
        self._observers: List[Observer] = []

    def attach(self, observer: Observer) -> None:
        """Attach an observer to receive trace records"""
        if observer not in self._observers:
            self._observers.append(observer)
            logger.debug(f"Observer {observer.__class__.__name__} attached")

    def notify(self, record: Any) -> None:
        """
        Deliver a record to every observer.
        A failing observer is logged and skipped; the solve continues.
        """
        for observer in self._observers:
            try:
                observer.update(record)
            except Exception as e:
                logger.error(f"Error notifying observer {observer.__class__.__name__}: {str(e)}")

    def iteration_completed(self, record: Any) -> None:
        """Called by the solver once per outer iteration"""
        self.notify(record)


class TraceRecorder(Observer):
    """
    Concrete Observer that keeps every record in memory.
    The solver attaches one of these to build SolveResult.trace.
    """

    def __init__(self):
        self.records: List[Any] = []

    def update(self, record: Any) -> None:
        self.records.append(record)


class CsvTraceObserver(Observer):
    """
    Concrete Observer streaming records as CSV rows.

    Args:
        stream: Open text stream; the header is written on construction
    """

    def __init__(self, stream: TextIO):
        self._writer = csv.writer(stream)
        self._writer.writerow(TRACE_COLUMNS)
        self._stream = stream

    def update(self, record: Any) -> None:
        self._writer.writerow(record.as_row())
        self._stream.flush()


class LoggingTraceObserver(Observer):
    """Concrete Observer echoing records to the log every `every` iterations"""

    def __init__(self, every: int = 1, level: int = logging.DEBUG):
        self.every = max(1, every)
        self.level = level

    def update(self, record: Any) -> None:
        if record.k % self.every == 0:
            logger.log(
                self.level,
                f"k={record.k} {record.step_type.value} f={record.f:.10g} "
                f"res={record.residual:.3e} GE={record.ge_cum} CG={record.cg_cum}"
            )
