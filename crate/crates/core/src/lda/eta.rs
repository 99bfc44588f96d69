use statrs::function::gamma::digamma;

use super::LdaError;

pub const ETA_FLOOR: f64 = 1e-6;

/// One fixed-point step of the maximum-likelihood Dirichlet estimate for the
/// topic-word prior, treating each topic's word counts as one draw:
///
/// `eta_w <- eta_w * sum_k [psi(n_kw + eta_w) - psi(eta_w)] / sum_k [psi(n_k + S) - psi(S)]`
///
/// with `S = sum_w eta_w`. Results are floored at [`ETA_FLOOR`].
pub fn estimate_eta(n_kw: &[Vec<f64>], eta: &[f64]) -> Result<Vec<f64>, LdaError> {
    let eta_sum: f64 = eta.iter().sum();
    let psi_sum = digamma(eta_sum);
    let denom: f64 = n_kw.iter().map(|row| digamma(row.iter().sum::<f64>() + eta_sum) - psi_sum).sum();
    if denom <= 0.0 {
        // no tokens at all: the likelihood is flat in eta
        return Ok(eta.to_vec());
    }
    let updated: Vec<f64> = eta
        .iter()
        .enumerate()
        .map(|(w, &e)| {
            let psi_e = digamma(e);
            let num: f64 = n_kw.iter().map(|row| digamma(row[w] + e) - psi_e).sum();
            (e * num / denom).max(ETA_FLOOR)
        })
        .collect();
    if updated.iter().all(|x| x.is_finite()) {
        Ok(updated)
    } else {
        Err(LdaError::NonFinite)
    }
}
