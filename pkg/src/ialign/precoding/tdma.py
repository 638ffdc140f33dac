"""TDMA with multiuser-diversity scheduling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelSet
from ..metrics import single_user_rates
from .solution import SolverError

MODES = ("subcarrier", "symbol")


@dataclass(frozen=True)
class TdmaSchedule:
    """Selected user and its rate for each scheduling slot.

    In ``"subcarrier"`` mode there is one slot per subcarrier; in ``"symbol"``
    mode a single user owns the whole OFDM symbol and ``users`` holds that index
    repeated for every subcarrier.
    """

    users: np.ndarray
    rates: np.ndarray
    mode: str

    @property
    def mean_rate(self) -> float:
        """Schedule rate averaged over subcarriers (bits/s/Hz)."""
        return float(np.mean(self.rates))


def tdma(set_: ChannelSet, sigma2: float, mode: str = "subcarrier") -> TdmaSchedule:
    """Give each slot to the user with the largest single-user rate.

    Rates use uniform power over the transmit antennas,
    ``log2 |I + H_kk H_kk^* / (sigma2 M_k)|``. Ties go to the lowest index.
    """
    if mode not in MODES:
        raise SolverError(f"unknown TDMA mode {mode!r}; expected one of {MODES}")
    if not sigma2 > 0:
        raise SolverError("tdma needs sigma2 > 0")
    rates = single_user_rates(set_, sigma2)
    if mode == "symbol":
        user = int(np.argmax(rates.mean(axis=0)))
        users = np.full(set_.N_sc, user)
    else:
        users = np.argmax(rates, axis=1)
    return TdmaSchedule(users, rates[np.arange(set_.N_sc), users], mode)
