use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::codec::decode;
use crate::masking::{derive_pair_secret, expand_mask};
use crate::protocol::{client_round_timed, setup, ClientKeyring, MaskMode, PublicDirectory};
use crate::ring::RingElement;
use crate::sampling::Seed;

use super::{pearson, rounds_to_zero, BenchError, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollusionReport {
    pub clients: usize,
    pub colluders: usize,
    pub d: usize,
    pub trials: usize,
    /// A coordinate counts as recovered when it lands within this distance
    /// of the honest client's true value.
    pub tolerance: f64,
    pub success_rate: f64,
    /// Adversary additionally holds every honest pair secret.
    pub control_success_rate: f64,
    /// Uploads sent without masks.
    pub leak_success_rate: f64,
    pub leak_max_error: f64,
    pub leak_exact: bool,
    /// Largest `|ρ|` between the masked single-client decode and the input.
    pub masked_max_correlation: f64,
}

/// `σ_hj · p_hj` as it enters `r_h`, computed with client `holder`'s secret.
fn signed_mask(
    holder: &ClientKeyring,
    dir: &PublicDirectory,
    h: u32,
    j: u32,
    round: u32,
) -> Result<RingElement, BenchError> {
    let other = if holder.id() == h { j } else { h };
    let ks = derive_pair_secret(holder.ecdh(), &dir.entry(other)?.ecdh, (holder.id(), other))?;
    let p = expand_mask(&ks, round, dir.params().ring()).p;
    Ok(if j > h { p } else { p.neg() })
}

fn hits(decoded: &[f64], truth: &[f64], tol: f64) -> usize {
    decoded.iter().zip(truth).filter(|(a, b)| (*a - *b).abs() <= tol).count()
}

/// Server plus `colluders` clients try to strip an honest client's mask.
pub fn collusion_experiment(
    cfg: &ExperimentConfig,
    clients: usize,
    colluders: usize,
    trials: usize,
) -> Result<CollusionReport, BenchError> {
    cfg.validate()?;
    if clients < 2 || colluders > clients - 2 {
        return Err(BenchError::InvalidConfig(format!(
            "colluders must be at most N - 2 = {}, got {colluders}",
            clients.saturating_sub(2)
        )));
    }
    if trials == 0 {
        return Err(BenchError::InvalidConfig("at least one trial is required".into()));
    }
    let d = cfg.dims[0];
    let params = cfg.params(d)?;
    let sp = *params.scale();
    let tolerance = (params.noise_budget(1).b_total + 2.0) / params.delta();
    let (mut adv, mut ctl, mut leak) = (0usize, 0usize, 0usize);
    let mut leak_max_error = 0f64;
    let mut masked_max_correlation = 0f64;

    for trial in 0..trials {
        let seed = Seed::from_u64(cfg.seed).derive(b"collude", trial as u64);
        let (dir, keys) = setup(&params, clients, &seed)?;
        let mut rng = seed.derive(b"adversary", 0).rng();
        let mut order: Vec<u32> = (0..clients as u32).collect();
        order.shuffle(&mut rng);
        let (coalition, honest) = order.split_at(colluders);
        let h = honest[0];
        let round = rng.random::<u32>();
        let r = cfg.value_range;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-r..=r)).collect();

        let hk = &keys[h as usize];
        let (masked, _) = client_round_timed(hk, &dir, &x, round, MaskMode::Masked)?;
        let (bare, _) = client_round_timed(hk, &dir, &x, round, MaskMode::Unmasked)?;

        let mut view = masked.c0.add(&masked.mu_tilde)?;
        let naive = decode(&view, &sp);
        masked_max_correlation = masked_max_correlation.max(pearson(&naive, &x).abs());

        for &j in coalition {
            let m = signed_mask(&keys[j as usize], &dir, h, j, round)?;
            view.sub_assign(&m)?;
        }
        adv += hits(&decode(&view, &sp), &x, tolerance);

        for &j in &honest[1..] {
            let m = signed_mask(hk, &dir, h, j, round)?;
            view.sub_assign(&m)?;
        }
        ctl += hits(&decode(&view, &sp), &x, tolerance);

        let exposed = decode(&bare.c0.add(&bare.mu_tilde)?, &sp);
        leak += hits(&exposed, &x, tolerance);
        for (a, b) in exposed.iter().zip(&x) {
            leak_max_error = leak_max_error.max((a - b).abs());
        }
    }
    let total = (trials * d) as f64;
    Ok(CollusionReport {
        clients,
        colluders,
        d,
        trials,
        tolerance,
        success_rate: adv as f64 / total,
        control_success_rate: ctl as f64 / total,
        leak_success_rate: leak as f64 / total,
        leak_max_error,
        leak_exact: rounds_to_zero(leak_max_error, cfg.precision),
        masked_max_correlation,
    })
}
