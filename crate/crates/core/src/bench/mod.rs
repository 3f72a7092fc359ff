//! In-process experiment harness.
//!
//! Runs whole cohorts (setup, then `rounds` one-shot rounds) with every
//! message passed through its byte encoding, checks each recovered sum
//! against the plaintext sum, and records per-phase timings.

mod collusion;
mod stats;

use std::io::Write;
use std::time::Duration;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::protocol::{
    client_round_timed, payload_accounting, server_round_timed, setup, ClientKeyring, ClientTimings, ClientUpload,
    MaskMode, MessageType, ParamRequest, ParamSet, ProtocolError, PublicDirectory,
};
use crate::sampling::{NoiseSpec, Seed};

pub use collusion::{collusion_experiment, CollusionReport};
pub use stats::{linear_fit, median, pearson, LinearFit};

/// Cohort bound used for parameter selection unless overridden; fixing it
/// keeps the ring identical across a client sweep.
pub const DEFAULT_MAX_COHORT: usize = 1000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "round {round} with N = {clients}, d = {d}: max error {max_abs_error:.3e} exceeds the analytic bound {bound:.3e}"
    )]
    Verification { clients: usize, d: usize, round: u32, max_abs_error: f64, bound: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

macro_rules! via_protocol {
    ($($t:ty),*) => {$(
        impl From<$t> for BenchError {
            fn from(e: $t) -> Self {
                BenchError::Protocol(e.into())
            }
        }
    )*};
}

via_protocol!(crate::ring::RingError, crate::masking::MaskError, crate::protocol::WireError);

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub clients: Vec<usize>,
    pub dims: Vec<usize>,
    pub rounds: u32,
    pub delta_bits: u32,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Inputs are drawn uniformly from `[-value_range, value_range]`.
    pub value_range: f64,
    pub max_cohort: usize,
    /// Decimal digits used for `exact_after_round`.
    pub precision: u32,
    pub timings: bool,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: vec![10],
            dims: vec![8192],
            rounds: 1,
            delta_bits: 40,
            noise: NoiseSpec::default(),
            seed: 0,
            value_range: 1.0,
            max_cohort: DEFAULT_MAX_COHORT,
            precision: 6,
            timings: true,
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: &str| Err(BenchError::InvalidConfig(msg.into()));
        if self.clients.is_empty() || self.dims.is_empty() {
            return bad("client and dimension lists must be nonempty");
        }
        if self.rounds == 0 {
            return bad("at least one round is required");
        }
        if self.clients.iter().any(|&n| n < 2) {
            return bad("every cohort needs at least two clients");
        }
        if self.dims.contains(&0) {
            return bad("dimensions must be positive");
        }
        if !(self.value_range.is_finite() && self.value_range > 0.0) {
            return bad("value range must be positive");
        }
        Ok(())
    }

    pub fn params(&self, d: usize) -> Result<ParamSet, BenchError> {
        let max_cohort = self.max_cohort.max(self.clients.iter().copied().max().unwrap_or(0));
        Ok(ParamSet::select(ParamRequest {
            d,
            max_cohort,
            delta_bits: self.delta_bits,
            noise: self.noise,
            value_bound: self.value_range,
        })?)
    }

    fn master_seed(&self, clients: usize, d: usize) -> Seed {
        Seed::from_u64(self.seed).derive(b"cohort", clients as u64).derive(b"dim", d as u64)
    }
}

/// One row per (cohort, round). Timing fields are `None` when timings are off.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub clients: usize,
    pub d: usize,
    pub n: usize,
    pub round: u32,
    pub encode_ms: Option<f64>,
    pub encrypt_ms: Option<f64>,
    pub share_ms: Option<f64>,
    pub mask_ms: Option<f64>,
    pub client_total_ms: Option<f64>,
    pub server_aggregate_ms: Option<f64>,
    pub server_decode_ms: Option<f64>,
    pub server_total_ms: Option<f64>,
    pub client_uplink_bytes: usize,
    pub expansion_factor: f64,
    pub max_abs_error: f64,
    pub exact_after_round: bool,
}

/// Whether `error` rounds to zero at `precision` decimals.
pub fn rounds_to_zero(error: f64, precision: u32) -> bool {
    (error.abs() * 10f64.powi(precision as i32)).round() == 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Party {
    Server,
    Client(u32),
}

/// A message as it would cross the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageEvent {
    /// `None` for setup traffic.
    pub round: Option<u32>,
    pub from: Party,
    pub to: Party,
    pub kind: MessageType,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageTrace {
    pub events: Vec<MessageEvent>,
}

impl MessageTrace {
    fn push(&mut self, round: Option<u32>, from: Party, to: Party, kind: MessageType, bytes: usize) {
        self.events.push(MessageEvent { round, from, to, kind, bytes });
    }

    /// Every client sent exactly one upload to the server in `round`, and
    /// the only server-to-client traffic in the round is the final downlink.
    pub fn is_one_shot(&self, round: u32, clients: usize) -> bool {
        let events: Vec<_> = self.events.iter().filter(|e| e.round == Some(round)).collect();
        let mut sent = vec![0usize; clients];
        let mut downlink_seen = false;
        for e in &events {
            match (e.from, e.to, e.kind) {
                (Party::Client(i), Party::Server, MessageType::ClientUpload) if !downlink_seen => {
                    match sent.get_mut(i as usize) {
                        Some(count) => *count += 1,
                        None => return false,
                    }
                }
                (Party::Server, Party::Client(_), MessageType::Downlink) => downlink_seen = true,
                _ => return false,
            }
        }
        sent.iter().all(|&c| c == 1)
    }

    pub fn uploads_in_round(&self, round: u32) -> usize {
        self.events.iter().filter(|e| e.round == Some(round) && e.kind == MessageType::ClientUpload).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRun {
    pub metrics: Vec<RoundMetrics>,
    pub trace: MessageTrace,
}

pub fn synthetic_inputs(cfg: &ExperimentConfig, clients: usize, d: usize, round: u32) -> Vec<Vec<f64>> {
    let mut rng = cfg.master_seed(clients, d).derive(b"inputs", round as u64).rng();
    let r = cfg.value_range;
    (0..clients).map(|_| (0..d).map(|_| rng.random_range(-r..=r)).collect()).collect()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn client_phase(
    keys: &[ClientKeyring],
    dir: &PublicDirectory,
    xs: &[Vec<f64>],
    round: u32,
    parallel: bool,
) -> Result<Vec<(Vec<u8>, ClientTimings)>, ProtocolError> {
    let one = |(k, x): (&ClientKeyring, &Vec<f64>)| {
        client_round_timed(k, dir, x, round, MaskMode::Masked).map(|(u, t)| (u.to_bytes(), t))
    };
    if !parallel {
        return keys.iter().zip(xs).map(one).collect();
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = keys.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = keys
            .chunks(chunk)
            .zip(xs.chunks(chunk))
            .map(|(kc, xc)| s.spawn(move || kc.iter().zip(xc).map(one).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut out = Vec::with_capacity(keys.len());
        for h in handles {
            out.extend(h.join().expect("client worker panicked")?);
        }
        Ok(out)
    })
}

/// Setup once, then `cfg.rounds` rounds; each round's sum is checked against
/// the plaintext sum and the analytic noise bound.
pub fn run_cohort_traced(cfg: &ExperimentConfig, clients: usize, d: usize) -> Result<CohortRun, BenchError> {
    cfg.validate()?;
    let params = cfg.params(d)?;
    let budget = params.noise_budget(clients);
    if !budget.passes {
        return Err(ProtocolError::NoiseBudget(budget).into());
    }
    let (dir, keys) = setup(&params, clients, &cfg.master_seed(clients, d))?;
    let ctx = params.ring().clone();
    let accounting = payload_accounting(&params, clients);
    let delta = params.delta();
    let bound = budget.b_total / delta + clients as f64 / delta + 1e-9 * clients as f64 * cfg.value_range;

    let mut trace = MessageTrace::default();
    let dir_bytes = dir.to_bytes().len();
    for i in 0..clients as u32 {
        trace.push(None, Party::Server, Party::Client(i), MessageType::PublicDirectory, dir_bytes);
    }

    let mut metrics = Vec::with_capacity(cfg.rounds as usize);
    for round in 0..cfg.rounds {
        let xs = synthetic_inputs(cfg, clients, d, round);
        let sent = client_phase(&keys, &dir, &xs, round, cfg.parallel)?;
        let mut sums = ClientTimings::default();
        let mut uplink = 0;
        let mut wire = Vec::with_capacity(clients);
        for (i, (bytes, t)) in sent.into_iter().enumerate() {
            trace.push(Some(round), Party::Client(i as u32), Party::Server, MessageType::ClientUpload, bytes.len());
            if i > 0 && bytes.len() != uplink {
                return Err(BenchError::InvalidConfig("uploads within a round differ in size".into()));
            }
            uplink = bytes.len();
            sums.encode += t.encode;
            sums.encrypt += t.encrypt;
            sums.share += t.share;
            sums.mask += t.mask;
            sums.total += t.total;
            wire.push(bytes);
        }
        let uploads = wire
            .into_iter()
            .map(|b| ClientUpload::from_bytes(&b, &ctx))
            .collect::<Result<Vec<_>, _>>()?;
        let (result, st) = server_round_timed(&uploads, &dir)?;
        drop(uploads);
        let down = result.downlink().to_bytes().len();
        for i in 0..clients as u32 {
            trace.push(Some(round), Party::Server, Party::Client(i), MessageType::Downlink, down);
        }

        let mut max_abs_error = 0f64;
        for (j, got) in result.sum.iter().enumerate() {
            let truth: f64 = xs.iter().map(|x| x[j]).sum();
            max_abs_error = max_abs_error.max((got - truth).abs());
        }
        if !(max_abs_error <= bound) {
            return Err(BenchError::Verification { clients, d, round, max_abs_error, bound });
        }
        let avg = |t: Duration| cfg.timings.then(|| ms(t) / clients as f64);
        let srv = |t: Duration| cfg.timings.then(|| ms(t));
        metrics.push(RoundMetrics {
            clients,
            d,
            n: params.n(),
            round,
            encode_ms: avg(sums.encode),
            encrypt_ms: avg(sums.encrypt),
            share_ms: avg(sums.share),
            mask_ms: avg(sums.mask),
            client_total_ms: avg(sums.total),
            server_aggregate_ms: srv(st.aggregate),
            server_decode_ms: srv(st.decode),
            server_total_ms: srv(st.total),
            client_uplink_bytes: uplink,
            expansion_factor: uplink as f64 / (d * 8) as f64,
            max_abs_error,
            exact_after_round: rounds_to_zero(max_abs_error, cfg.precision),
        });
        debug_assert_eq!(uplink, accounting.client_uplink_bytes);
    }
    Ok(CohortRun { metrics, trace })
}

pub fn run_cohort(cfg: &ExperimentConfig, clients: usize, d: usize) -> Result<Vec<RoundMetrics>, BenchError> {
    run_cohort_traced(cfg, clients, d).map(|r| r.metrics)
}

/// Every `clients` entry at the single configured dimension.
pub fn sweep_clients(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>, BenchError> {
    cfg.validate()?;
    let [d] = cfg.dims[..] else {
        return Err(BenchError::InvalidConfig("a client sweep needs exactly one dimension".into()));
    };
    let mut rows = Vec::new();
    for &clients in &cfg.clients {
        rows.extend(run_cohort(cfg, clients, d)?);
    }
    Ok(rows)
}

/// Every `dims` entry at the single configured cohort size.
pub fn sweep_dims(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>, BenchError> {
    cfg.validate()?;
    let [clients] = cfg.clients[..] else {
        return Err(BenchError::InvalidConfig("a dimension sweep needs exactly one cohort size".into()));
    };
    let mut rows = Vec::new();
    for &d in &cfg.dims {
        rows.extend(run_cohort(cfg, clients, d)?);
    }
    Ok(rows)
}

/// Medians over the rounds of one (N, d) configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub clients: usize,
    pub d: usize,
    pub n: usize,
    pub rounds: usize,
    pub median_client_total_ms: Option<f64>,
    pub median_mask_ms: Option<f64>,
    pub median_server_total_ms: Option<f64>,
    pub client_uplink_bytes: usize,
    pub expansion_factor: f64,
    pub max_abs_error: f64,
    pub all_exact: bool,
}

pub fn summarize(rows: &[RoundMetrics]) -> Vec<CohortSummary> {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.clients, r.d)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(clients, d)| {
            let group: Vec<&RoundMetrics> = rows.iter().filter(|r| r.clients == clients && r.d == d).collect();
            let med = |f: fn(&RoundMetrics) -> Option<f64>| {
                let v: Option<Vec<f64>> = group.iter().map(|r| f(r)).collect();
                v.map(|v| median(&v))
            };
            CohortSummary {
                clients,
                d,
                n: group[0].n,
                rounds: group.len(),
                median_client_total_ms: med(|r| r.client_total_ms),
                median_mask_ms: med(|r| r.mask_ms),
                median_server_total_ms: med(|r| r.server_total_ms),
                client_uplink_bytes: group[0].client_uplink_bytes,
                expansion_factor: group[0].expansion_factor,
                max_abs_error: group.iter().map(|r| r.max_abs_error).fold(0.0, f64::max),
                all_exact: group.iter().all(|r| r.exact_after_round),
            }
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(rows: &[T], mut out: W) -> Result<(), BenchError> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    Ok(())
}
