//! Signal-to-noise scoring of reconstructions.

/// Scores are capped here when the error vanishes.
pub const SNR_CAP_DB: f64 = 99.0;

/// `10 log10(Σ ref² / Σ (ref − rec)²)` over the samples where `mask` is set.
///
/// An empty selection scores the cap. A selection whose reference is
/// silent has no defined SNR and returns `None`.
pub fn snr_db(reference: &[f64], reconstruction: &[f64], mask: &[bool]) -> Option<f64> {
    assert_eq!(reference.len(), reconstruction.len(), "reference and reconstruction lengths differ");
    assert_eq!(reference.len(), mask.len(), "mask length differs from the signal");
    let mut signal = 0.0;
    let mut error = 0.0;
    let mut any = false;
    for ((r, x), &m) in reference.iter().zip(reconstruction).zip(mask) {
        if m {
            any = true;
            signal += r * r;
            error += (r - x) * (r - x);
        }
    }
    if !any {
        return Some(SNR_CAP_DB);
    }
    if signal == 0.0 {
        return None;
    }
    if error == 0.0 {
        return Some(SNR_CAP_DB);
    }
    Some((10.0 * (signal / error).log10()).min(SNR_CAP_DB))
}

/// [`snr_db`] over every sample.
pub fn global_snr_db(reference: &[f64], reconstruction: &[f64]) -> Option<f64> {
    snr_db(reference, reconstruction, &vec![true; reference.len()])
}
