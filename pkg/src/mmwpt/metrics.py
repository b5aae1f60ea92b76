"""Figures of merit computed from solved loop currents.

S-parameters are referenced to the port resistances: the source side to
``r_source`` and the load side to ``r_load``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import (
    DRIVER,
    LOAD,
    RECEIVER,
    TRANSMITTER,
    SystemModel,
    _check_omega,
    self_impedance,
    solve_currents,
    solve_many,
)
from .errors import DomainError, ModelValidationError, SingularSystemError


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    frequency: float
    currents: np.ndarray
    v_load: complex
    gain: complex
    s21: complex
    pte: float
    s11: complex


def voltage_gain(model: SystemModel, currents) -> complex:
    """``V_L / V_S`` with ``V_L = I_load * R_L``."""
    if model.source.v_source == 0:
        raise DomainError("voltage gain is undefined for v_source = 0")
    g = np.asarray(currents)[..., model.load_index] * model.load.r_load / model.source.v_source
    return complex(g) if np.ndim(g) == 0 else g


def s21(gain, r_source: float, r_load: float):
    """``S21 = 2 (V_L/V_S) sqrt(R_S/R_L)``."""
    if not (r_source > 0 and r_load > 0):
        raise DomainError(f"S21 needs positive port resistances, got R_S={r_source!r}, R_L={r_load!r}")
    return 2 * gain * math.sqrt(r_source / r_load)


def pte(s21_value):
    """Power transfer efficiency in percent, ``|S21|^2 * 100``."""
    return np.abs(s21_value) ** 2 * 100


def input_impedance(model: SystemModel, currents):
    """Driving-point impedance seen by the source, excluding ``r_source``."""
    x = np.asarray(currents)
    return model.source.v_source / x[..., model.driver_index] - model.source.r_source


def reflection(z_in, r_ref: float):
    return (z_in - r_ref) / (z_in + r_ref)


def input_reflection(model: SystemModel, omega: float) -> complex:
    """S11 at the source port, referenced to ``r_source``."""
    x = solve_currents(model, omega)
    return complex(reflection(input_impedance(model, x), model.source.r_source))


def resonant_frequency(l: float, c: float) -> float:
    if not (l > 0 and c > 0):
        raise DomainError(f"resonant_frequency needs l, c > 0, got l={l!r}, c={c!r}")
    return 1.0 / (2 * math.pi * math.sqrt(l * c))


def closed_form_gain(model: SystemModel, omega: float) -> complex:
    """The printed four-coil transfer function, evaluated term by term.

    Diagnostic only: the expression carries self inductances where mutual
    inductances would be expected, so it does not agree with the matrix
    solve. Metamaterial cells and couplings are ignored.
    """
    w = float(_check_omega(omega))
    try:
        dr, tx, rx, ld = (model.resonators[model.index_of(r)].params
                          for r in (DRIVER, TRANSMITTER, RECEIVER, LOAD))
    except ModelValidationError as exc:
        raise ModelValidationError(f"closed_form_gain needs a four-coil model: {exc}") from None
    r_load = model.load.r_load
    z_dr = self_impedance(dr, w)
    z_tx = self_impedance(tx, w)
    z_rx = self_impedance(rx, w)
    z_l = r_load + self_impedance(ld, w)
    L_dr, L_tx, L_rx, L_l = dr.inductance, tx.inductance, rx.inductance, ld.inductance

    num = w**3 * L_tx * L_rx * r_load * math.sqrt(L_dr * L_l)
    den = (z_dr * z_tx * z_rx * z_l
           + w**2 * (L_dr * L_rx * z_rx * z_l + L_tx * L_rx * z_dr * z_l + L_rx * L_l * z_dr * z_tx)
           + w**4 * (L_dr * L_tx * L_rx * L_l))
    if den == 0:
        raise SingularSystemError("closed-form denominator vanishes", omega=w)
    return complex(num / den)


def port_metrics(model: SystemModel, currents):
    """Gain, S21, S11 and PTE for one or many current vectors.

    Rows of NaN currents (singular solves) propagate as NaN.
    """
    x = np.asarray(currents)
    gain = voltage_gain(model, x)
    s21_value = s21(gain, model.source.r_source, model.load.r_load)
    with np.errstate(divide="ignore", invalid="ignore"):
        s11_value = reflection(input_impedance(model, x), model.source.r_source)
    return gain, s21_value, s11_value, pte(s21_value)


def frequency_response(model: SystemModel, frequency: float) -> FrequencyResponse:
    omega = 2 * math.pi * frequency
    x = solve_currents(model, omega)
    gain, s, s11_value, p = port_metrics(model, x)
    return FrequencyResponse(
        frequency=float(frequency),
        currents=x,
        v_load=complex(x[model.load_index] * model.load.r_load),
        gain=complex(gain),
        s21=complex(s),
        pte=float(p),
        s11=complex(s11_value),
    )


def responses(model: SystemModel, frequencies):
    """Vectorised sweep core: currents plus port metrics for every frequency."""
    f = np.asarray(frequencies, dtype=float)
    x, ok = solve_many(model, 2 * np.pi * f)
    gain, s, s11_value, p = port_metrics(model, x)
    return x, ok, gain, s, s11_value, p
