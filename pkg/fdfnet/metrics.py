"""Waveform fidelity metrics, in dB and capped at +/-100 dB."""
import numpy as np
import pandas as pd

from .errors import DomainError, ShapeError

DB_CAP = 100.0


def _pair(estimate, reference):
    est = np.asarray(getattr(estimate, "samples", estimate), dtype=np.float64)
    ref = np.asarray(getattr(reference, "samples", reference), dtype=np.float64)
    if est.shape != ref.shape:
        raise ShapeError(f"estimate and reference differ in shape: {est.shape} vs {ref.shape}")
    if not np.any(ref):
        raise DomainError("reference signal has zero energy")
    return est, ref


def _ratio_db(signal_energy, noise_energy):
    if noise_energy == 0.0:
        return DB_CAP
    if signal_energy == 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(signal_energy / noise_energy), -DB_CAP, DB_CAP))


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR: project the estimate onto the reference first."""
    est, ref = _pair(estimate, reference)
    target = (np.dot(est, ref) / np.dot(ref, ref)) * ref
    residual = est - target
    return _ratio_db(np.dot(target, target), np.dot(residual, residual))


def snr(estimate, reference) -> float:
    est, ref = _pair(estimate, reference)
    residual = est - ref
    return _ratio_db(np.dot(ref, ref), np.dot(residual, residual))


def score_row(name, estimate, noisy, clean) -> dict:
    """Per-file metrics plus the improvement over the unprocessed mixture."""
    row = {
        "file": name,
        "si_sdr": si_sdr(estimate, clean),
        "snr": snr(estimate, clean),
        "noisy_si_sdr": si_sdr(noisy, clean),
        "noisy_snr": snr(noisy, clean),
    }
    row["si_sdr_improvement"] = row["si_sdr"] - row["noisy_si_sdr"]
    row["snr_improvement"] = row["snr"] - row["noisy_snr"]
    return row


def summarize(rows) -> pd.DataFrame:
    """Per-file table with a trailing ``mean`` row over every numeric column."""
    table = pd.DataFrame(list(rows))
    if table.empty:
        return table
    mean = {"file": "mean", **table.drop(columns=["file"]).mean(numeric_only=True).to_dict()}
    return pd.concat([table, pd.DataFrame([mean])], ignore_index=True)
