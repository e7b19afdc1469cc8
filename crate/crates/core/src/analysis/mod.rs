//! Estimators over detection records: coincidence tables, visibilities,
//! correlations, CHSH, retrieval efficiency, and the curve fits.

mod fit;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavity::LossChain;
use crate::error::{finite, Error, Result};
use crate::montecarlo::{map_block_chunks, Block, BlockModel, ExperimentConfig, TrialEvent};
use crate::quantum_state::{AnalyzerSetting, ChshSigns};

pub use fit::{fit_damped_sinusoid, fit_visibility_decay, FitParameter, FitResult, GRADIENT_TOL};

/// Intrinsic retrieval above which a loophole-free test with the
/// Eberhard inequality becomes possible.
pub const EBERHARD_THRESHOLD: f64 = 2.0 / 3.0;

/// Largest intrinsic efficiency tolerated before the loss chain is deemed
/// inconsistent with the data.
const INTRINSIC_CEILING: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

/// Ground-truth counts, present unless some click in the table lacked
/// simulator tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaggedCounts {
    /// Trials whose write-out click was a real spin-wave herald.
    pub heralds: u64,
    /// Heralds followed by a retrieved signal read-out click.
    pub retrieved: u64,
}

/// Counts for one (storage time, write setting, read setting) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceTable {
    pub storage_time: f64,
    pub write: AnalyzerSetting,
    pub read: AnalyzerSetting,
    /// Coincidences ordered (++, +−, −+, −−), write-out port first.
    pub counts: [u64; 4],
    pub wo_singles: u64,
    pub ro_singles: u64,
    pub trials: u64,
    pub tagged: Option<TaggedCounts>,
}

impl CoincidenceTable {
    pub fn empty(block: &Block) -> Self {
        Self {
            storage_time: block.storage_time,
            write: block.write,
            read: block.read,
            counts: [0; 4],
            wo_singles: 0,
            ro_singles: 0,
            trials: block.trials,
            tagged: Some(TaggedCounts::default()),
        }
    }

    pub fn coincidences(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn same_point(&self, other: &Self) -> bool {
        self.storage_time.to_bits() == other.storage_time.to_bits()
            && self.write == other.write
            && self.read == other.read
    }

    /// Adds the counts of another table taken at the same point.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.same_point(other) {
            return Err(Error::Domain(format!(
                "cannot merge tables at different points ({} µs {}/{} vs {} µs {}/{})",
                self.storage_time,
                self.write,
                self.read,
                other.storage_time,
                other.write,
                other.read
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.wo_singles += other.wo_singles;
        self.ro_singles += other.ro_singles;
        self.trials += other.trials;
        self.tagged = match (self.tagged, other.tagged) {
            (Some(a), Some(b)) => Some(TaggedCounts {
                heralds: a.heralds + b.heralds,
                retrieved: a.retrieved + b.retrieved,
            }),
            _ => None,
        };
        Ok(())
    }
}

fn describe(event: &TrialEvent) -> Error {
    Error::UnplannedEvent {
        storage_time: event.storage_time,
        settings: format!("{}/{}", event.write_setting, event.read_setting),
    }
}

/// Builds one table per planned block. Events outside the plan, or whose
/// storage time or settings disagree with their block, are rejected.
pub fn tabulate(events: &[TrialEvent], plan: &[Block]) -> Result<Vec<CoincidenceTable>> {
    let mut blocks: Vec<&Block> = plan.iter().collect();
    blocks.sort_by_key(|b| b.first_trial);
    let mut tables: Vec<CoincidenceTable> =
        blocks.iter().map(|b| CoincidenceTable::empty(b)).collect();
    let mut untagged = vec![false; blocks.len()];

    for event in events {
        let pos = blocks.partition_point(|b| b.first_trial <= event.trial_id);
        let idx = pos.checked_sub(1).ok_or_else(|| describe(event))?;
        let block = blocks[idx];
        if !block.contains(event.trial_id)
            || block.storage_time.to_bits() != event.storage_time.to_bits()
            || block.write != event.write_setting
            || block.read != event.read_setting
        {
            return Err(describe(event));
        }
        let table = &mut tables[idx];
        if event.wo_port.is_some() {
            table.wo_singles += 1;
        }
        if event.ro_port.is_some() {
            table.ro_singles += 1;
        }
        if let (Some(w), Some(r)) = (event.wo_port, event.ro_port) {
            table.counts[2 * w.index() + r.index()] += 1;
        }
        match (event.wo_is_background, event.ro_is_background) {
            (None, None) => untagged[idx] = true,
            (wo_bg, ro_bg) => {
                if let Some(tags) = table.tagged.as_mut() {
                    if wo_bg == Some(false) {
                        tags.heralds += 1;
                        if ro_bg == Some(false) {
                            tags.retrieved += 1;
                        }
                    }
                }
            }
        }
    }

    for (table, untagged) in tables.iter_mut().zip(untagged) {
        if untagged {
            table.tagged = None;
        }
    }
    // report in plan order
    let mut order: Vec<usize> = (0..tables.len()).collect();
    order.sort_by_key(|&i| blocks[i].index);
    let mut out = vec![None; tables.len()];
    for (slot, i) in order.into_iter().enumerate() {
        out[slot] = Some(tables[i].clone());
    }
    Ok(out.into_iter().flatten().collect())
}

/// Simulates a run and tabulates it chunk by chunk without keeping the
/// events; equal to `tabulate(&run_trials(config, seed)?, &config.plan())`.
pub fn simulate_tables(config: &ExperimentConfig, seed: u64) -> Result<Vec<CoincidenceTable>> {
    config.validate()?;
    let mut tables = Vec::new();
    for block in config.plan() {
        let model = BlockModel::new(config, block)?;
        let parts = map_block_chunks(&model, seed, |events| {
            tabulate(&events, &[block]).map(|mut t| {
                let mut table = t.remove(0);
                table.trials = 0;
                table
            })
        });
        let mut total = CoincidenceTable {
            trials: 0,
            ..CoincidenceTable::empty(&block)
        };
        for part in parts {
            total.merge(&part?)?;
        }
        total.trials = block.trials;
        tables.push(total);
    }
    Ok(tables)
}

/// V = |n⊥ − n∥|/(n⊥ + n∥) with Poisson error
/// 2√(n∥²n⊥ + n⊥²n∥)/(n⊥ + n∥)².
pub fn visibility_estimate(counts: [u64; 4]) -> Result<Estimate> {
    let par = (counts[0] + counts[3]) as f64;
    let perp = (counts[1] + counts[2]) as f64;
    let total = par + perp;
    if total == 0.0 {
        return Err(Error::InsufficientData(
            "no coincidences for a visibility".into(),
        ));
    }
    Ok(Estimate {
        value: (perp - par).abs() / total,
        sigma: 2.0 * (par * par * perp + perp * perp * par).sqrt() / (total * total),
    })
}

/// Reorders (++, +−, −+, −−) into (θθ, θ⊥θ⊥, θ⊥θ, θθ⊥).
pub fn folded_counts(counts: [u64; 4]) -> [u64; 4] {
    [counts[0], counts[3], counts[2], counts[1]]
}

/// E = (A − B)/(A + B) from counts ordered (θθ, θ⊥θ⊥, θ⊥θ, θθ⊥), with
/// A the equal-port sum; σ² = 4AB/(A + B)³.
pub fn correlation_estimate(folded: [u64; 4]) -> Result<Estimate> {
    let a = (folded[0] + folded[1]) as f64;
    let b = (folded[2] + folded[3]) as f64;
    let total = a + b;
    if total == 0.0 {
        return Err(Error::InsufficientData(
            "no coincidences for a correlation".into(),
        ));
    }
    Ok(Estimate {
        value: (a - b) / total,
        sigma: (4.0 * a * b / total.powi(3)).sqrt(),
    })
}

pub fn correlation_from_table(table: &CoincidenceTable) -> Result<Estimate> {
    correlation_estimate(folded_counts(table.counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub s: Estimate,
    /// E for (a,b), (a,b′), (a′,b), (a′,b′).
    pub correlations: [Estimate; 4],
    /// (S − 2)/σ_S; `None` when σ_S is zero.
    pub sd_violation: Option<f64>,
}

pub fn chsh_estimate(correlations: [Estimate; 4]) -> ChshEstimate {
    chsh_estimate_with(correlations, ChshSigns::Standard)
}

pub fn chsh_estimate_with(correlations: [Estimate; 4], signs: ChshSigns) -> ChshEstimate {
    let value = signs.combine(correlations.map(|e| e.value));
    let sigma = correlations
        .iter()
        .map(|e| e.sigma * e.sigma)
        .sum::<f64>()
        .sqrt();
    ChshEstimate {
        s: Estimate { value, sigma },
        correlations,
        sd_violation: (sigma > 0.0).then(|| (value - 2.0) / sigma),
    }
}

/// Per-trial detection probabilities entering the retrieval estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyInputs {
    pub p_wo: f64,
    pub p_ro: f64,
    pub p_coin: f64,
    /// Write-out click probability without a stored excitation.
    pub p_wobg: f64,
}

/// R_net = (p_coin − p_wo·p_ro)/(p_wo − p_wobg).
pub fn net_retrieval_estimate(inputs: &EfficiencyInputs) -> Result<f64> {
    for (name, v) in [
        ("p_wo", inputs.p_wo),
        ("p_ro", inputs.p_ro),
        ("p_coin", inputs.p_coin),
        ("p_wobg", inputs.p_wobg),
    ] {
        crate::error::probability(name, v)?;
    }
    let denom = inputs.p_wo - inputs.p_wobg;
    if denom <= 0.0 {
        return Err(Error::Domain("background exceeds write-out rate".into()));
    }
    Ok((inputs.p_coin - inputs.p_wo * inputs.p_ro) / denom)
}

/// Net retrieval from summed tables, with a Poisson error propagated through
/// the coincidence and singles counts.
pub fn net_retrieval_from_tables(tables: &[&CoincidenceTable], p_wobg: f64) -> Result<Estimate> {
    let n: u64 = tables.iter().map(|t| t.trials).sum();
    if n == 0 {
        return Err(Error::InsufficientData(
            "no trials for a retrieval estimate".into(),
        ));
    }
    let w = tables.iter().map(|t| t.wo_singles).sum::<u64>() as f64;
    let r = tables.iter().map(|t| t.ro_singles).sum::<u64>() as f64;
    let c = tables.iter().map(|t| t.coincidences()).sum::<u64>() as f64;
    let n = n as f64;
    let value = net_retrieval_estimate(&EfficiencyInputs {
        p_wo: w / n,
        p_ro: r / n,
        p_coin: c / n,
        p_wobg,
    })?;
    let d = w / n - p_wobg;
    let num = c / n - w * r / (n * n);
    let dc = 1.0 / (n * d);
    let dr = -(w / (n * n)) / d;
    let dw = (-(r / (n * n)) * d - num / n) / (d * d);
    let sigma = (dc * dc * c + dr * dr * r + dw * dw * w).sqrt();
    Ok(Estimate { value, sigma })
}

/// Fraction of heralded spin waves whose read-out photon was detected.
pub fn tagged_retrieval_estimate(tables: &[&CoincidenceTable]) -> Result<Estimate> {
    let mut heralds = 0u64;
    let mut retrieved = 0u64;
    for t in tables {
        let tags = t
            .tagged
            .ok_or_else(|| Error::InsufficientData("table carries no ground-truth tags".into()))?;
        heralds += tags.heralds;
        retrieved += tags.retrieved;
    }
    if heralds == 0 {
        return Err(Error::InsufficientData("no heralded spin waves".into()));
    }
    let h = heralds as f64;
    let p = retrieved as f64 / h;
    Ok(Estimate {
        value: p,
        sigma: (p * (1.0 - p) / h).sqrt(),
    })
}

/// R_int = R_net / (escape · transmittance · detector).
pub fn intrinsic_from_net(r_net: f64, chain: &LossChain) -> Result<f64> {
    finite("r_net", r_net)?;
    chain.validate()?;
    let r_int = r_net / chain.product();
    if r_int > INTRINSIC_CEILING {
        return Err(Error::Domain(format!(
            "intrinsic retrieval {r_int:.3} exceeds unity; the loss chain does not match the data"
        )));
    }
    Ok(r_int)
}

pub fn exceeds_eberhard(r_int: f64) -> bool {
    r_int > EBERHARD_THRESHOLD
}

/// Report line for an intrinsic efficiency above the Eberhard threshold.
pub fn eberhard_note(r_int: f64) -> Option<String> {
    exceeds_eberhard(r_int).then(|| {
        format!(
            "R_int = {:.1}%, larger than the threshold of {:.1}% for a Bell test without detection loophole",
            100.0 * r_int,
            100.0 * EBERHARD_THRESHOLD
        )
    })
}

/// SHA-256 (hex) of the JSON form of an estimator's inputs.
pub fn inputs_hash<T: Serialize + ?Sized>(inputs: &T) -> String {
    let bytes = serde_json::to_vec(inputs).expect("estimator inputs serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Storage times in [0, window] where φ = −ωt is a multiple of π.
pub fn max_visibility_times(larmor_omega: f64, window: f64) -> Result<Vec<f64>> {
    finite("larmor_omega", larmor_omega)?;
    finite("window", window)?;
    if larmor_omega == 0.0 {
        return Err(Error::param("larmor_omega", "must be non-zero"));
    }
    if window < 0.0 {
        return Err(Error::param("window", "must be ≥ 0"));
    }
    let half = PI / larmor_omega.abs();
    let count = (window / half * (1.0 + 1e-12)).floor() as u64;
    Ok((0..=count).map(|k| k as f64 * half).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::Port;
    use crate::quantum_state::SourceParams;
    use proptest::prelude::*;

    fn block(index: usize, t: f64, first: u64, trials: u64) -> Block {
        Block {
            index,
            storage_time: t,
            write: AnalyzerSetting::hv(),
            read: AnalyzerSetting::hv(),
            first_trial: first,
            trials,
        }
    }

    fn event(id: u64, t: f64, wo: Option<Port>, ro: Option<Port>) -> TrialEvent {
        TrialEvent {
            trial_id: id,
            storage_time: t,
            write_setting: AnalyzerSetting::hv(),
            read_setting: AnalyzerSetting::hv(),
            wo_port: wo,
            ro_port: ro,
            wo_is_background: None,
            ro_is_background: None,
        }
    }

    /// Delta-method error with Poisson variances, by finite differences.
    fn numeric_sigma(f: impl Fn([f64; 4]) -> f64, n: [u64; 4]) -> f64 {
        let x = n.map(|v| v as f64);
        let mut var = 0.0;
        for i in 0..4 {
            let h = 1e-4 * x[i].max(1.0);
            let (mut up, mut dn) = (x, x);
            up[i] += h;
            dn[i] -= h;
            let d = (f(up) - f(dn)) / (2.0 * h);
            var += d * d * x[i];
        }
        var.sqrt()
    }

    #[test]
    fn visibility_examples() {
        let v = visibility_estimate([20, 90, 90, 20]).unwrap();
        assert!((v.value - 140.0 / 220.0).abs() < 1e-12);
        let want = numeric_sigma(
            |x| (x[1] + x[2] - x[0] - x[3]) / x.iter().sum::<f64>(),
            [20, 90, 90, 20],
        );
        assert!((v.sigma - want).abs() < 1e-8, "{} vs {want}", v.sigma);
        let perfect = visibility_estimate([0, 50, 50, 0]).unwrap();
        assert_eq!(perfect.value, 1.0);
        assert_eq!(perfect.sigma, 0.0);
        assert_eq!(visibility_estimate([0, 60, 40, 0]).unwrap().value, 1.0);
        assert_eq!(visibility_estimate([25, 25, 25, 25]).unwrap().value, 0.0);
        assert_eq!(visibility_estimate([60, 0, 0, 40]).unwrap().value, 1.0);
        assert!(matches!(
            visibility_estimate([0; 4]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let e = correlation_estimate([400, 400, 100, 100]).unwrap();
        assert!((e.value - 0.6).abs() < 1e-12);
        let want = numeric_sigma(
            |x| (x[0] + x[1] - x[2] - x[3]) / x.iter().sum::<f64>(),
            [400, 400, 100, 100],
        );
        assert!((e.sigma - want).abs() < 1e-8);
        assert!((e.sigma - (0.64f64 / 1000.0).sqrt()).abs() < 1e-12);
        assert!(correlation_estimate([0; 4]).is_err());
    }

    #[test]
    fn chsh_combination() {
        let e = |v| Estimate {
            value: v,
            sigma: 0.01,
        };
        let r = chsh_estimate([e(0.6), e(0.6), e(0.6), e(-0.6)]);
        assert!((r.s.value - 2.4).abs() < 1e-12);
        assert!((r.s.sigma - 0.02).abs() < 1e-12);
        assert!((r.sd_violation.unwrap() - 20.0).abs() < 1e-9);
        let zero = Estimate {
            value: 0.5,
            sigma: 0.0,
        };
        assert!(chsh_estimate([zero; 4]).sd_violation.is_none());
    }

    #[test]
    fn retrieval_fixture() {
        let inputs = EfficiencyInputs {
            p_wo: 7.7e-3,
            p_ro: 4.0e-3,
            p_coin: 1.23e-3,
            p_wobg: 0.6e-3,
        };
        let r = net_retrieval_estimate(&inputs).unwrap();
        assert!((r - 0.169).abs() < 5e-4, "{r}");
        let r_int = intrinsic_from_net(r, &LossChain::default()).unwrap();
        assert!((r_int - 0.760).abs() < 2e-3, "{r_int}");
        assert!(exceeds_eberhard(r_int));
        assert!(!exceeds_eberhard(0.6));
        assert!(eberhard_note(r_int)
            .unwrap()
            .contains("larger than the threshold of 66.7%"));
        assert!(eberhard_note(0.6).is_none());

        let bad = EfficiencyInputs {
            p_wobg: 8e-3,
            ..inputs
        };
        let err = net_retrieval_estimate(&bad).unwrap_err();
        assert!(err
            .to_string()
            .contains("background exceeds write-out rate"));
        assert!(intrinsic_from_net(0.5, &LossChain::default()).is_err());
    }

    #[test]
    fn retrieval_sigma_matches_numeric() {
        let table = CoincidenceTable {
            counts: [300, 10, 12, 280],
            wo_singles: 4000,
            ro_singles: 2500,
            trials: 500_000,
            ..CoincidenceTable::empty(&block(0, 0.0, 0, 500_000))
        };
        let est = net_retrieval_from_tables(&[&table], 6e-4).unwrap();
        let n = 500_000.0;
        let f = |x: [f64; 4]| (x[0] / n - x[1] * x[2] / (n * n)) / (x[1] / n - 6e-4);
        let x = [602.0, 4000.0, 2500.0];
        let mut var = 0.0;
        for i in 0..3 {
            let h = 1e-4 * x[i];
            let mut up = [x[0], x[1], x[2], 0.0];
            let mut dn = up;
            up[i] += h;
            dn[i] -= h;
            let d = (f(up) - f(dn)) / (2.0 * h);
            var += d * d * x[i];
        }
        assert!((est.sigma - var.sqrt()).abs() < 1e-6 * var.sqrt().max(1e-12));
    }

    #[test]
    fn tabulate_counts_and_rejects() {
        let plan = [block(0, 0.0, 0, 10), block(1, 1.0, 10, 10)];
        let events = [
            event(1, 0.0, Some(Port::Plus), Some(Port::Plus)),
            event(2, 0.0, Some(Port::Plus), None),
            event(3, 0.0, None, Some(Port::Minus)),
            event(12, 1.0, Some(Port::Minus), Some(Port::Plus)),
        ];
        let t = tabulate(&events, &plan).unwrap();
        assert_eq!(t[0].counts, [1, 0, 0, 0]);
        assert_eq!((t[0].wo_singles, t[0].ro_singles), (2, 2));
        assert_eq!(t[1].counts, [0, 0, 1, 0]);
        assert!(t[0].tagged.is_none());
        for table in &t {
            for &c in &table.counts {
                assert!(c <= table.wo_singles.min(table.ro_singles));
            }
        }

        let stray = [event(25, 1.0, Some(Port::Plus), None)];
        assert!(matches!(
            tabulate(&stray, &plan),
            Err(Error::UnplannedEvent { .. })
        ));
        let wrong_time = [event(12, 2.0, Some(Port::Plus), None)];
        assert!(matches!(
            tabulate(&wrong_time, &plan),
            Err(Error::UnplannedEvent { .. })
        ));
    }

    #[test]
    fn tagged_counts() {
        let plan = [block(0, 0.0, 0, 10)];
        let mut e1 = event(1, 0.0, Some(Port::Plus), Some(Port::Minus));
        e1.wo_is_background = Some(false);
        e1.ro_is_background = Some(false);
        let mut e2 = event(2, 0.0, Some(Port::Plus), None);
        e2.wo_is_background = Some(false);
        let t = tabulate(&[e1, e2], &plan).unwrap();
        assert_eq!(
            t[0].tagged,
            Some(TaggedCounts {
                heralds: 2,
                retrieved: 1
            })
        );
        let est = tagged_retrieval_estimate(&[&t[0]]).unwrap();
        assert_eq!(est.value, 0.5);
    }

    #[test]
    fn streaming_matches_materialized() {
        let config = ExperimentConfig {
            trials_per_point: 150_000,
            ..ExperimentConfig::default()
        };
        let events = crate::montecarlo::run_trials(&config, 3).unwrap();
        let direct = tabulate(&events, &config.plan()).unwrap();
        assert_eq!(simulate_tables(&config, 3).unwrap(), direct);
        assert!(direct.iter().all(|t| t.tagged.is_some()));
    }

    #[test]
    fn empty_stream_gives_zero_tables() {
        let plan = [block(0, 0.0, 0, 10), block(1, 1.0, 10, 10)];
        let t = tabulate(&[], &plan).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t
            .iter()
            .all(|t| t.counts == [0; 4] && t.wo_singles == 0 && t.trials == 10));
    }

    #[test]
    fn merge_adds() {
        let b = block(0, 0.0, 0, 10);
        let mut a = CoincidenceTable {
            counts: [1, 2, 3, 4],
            wo_singles: 10,
            ..CoincidenceTable::empty(&b)
        };
        let other = a.clone();
        a.merge(&other).unwrap();
        assert_eq!(a.counts, [2, 4, 6, 8]);
        assert_eq!(a.trials, 20);
        let elsewhere = CoincidenceTable::empty(&block(1, 1.0, 10, 10));
        assert!(a.merge(&elsewhere).is_err());
    }

    #[test]
    fn visibility_time_grid() {
        let omega = SourceParams::default().larmor_omega;
        let times = max_visibility_times(omega, 20.0).unwrap();
        let half = PI / omega;
        assert_eq!(times[0], 0.0);
        assert!((times[1] - half).abs() < 1e-12);
        for target in [9.5, 17.9] {
            assert!(times.iter().any(|t| (t - target).abs() < 0.06), "{target}");
        }
        assert!(times.iter().any(|t| (t - 1.1).abs() < 0.1));
        assert!(max_visibility_times(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn visibility_relabel_symmetry(c in proptest::array::uniform4(0u64..10_000)) {
            prop_assume!(c.iter().sum::<u64>() > 0);
            let v = visibility_estimate(c).unwrap();
            // swapping ± on both analyzers
            let both = visibility_estimate([c[3], c[2], c[1], c[0]]).unwrap();
            prop_assert!((v.value - both.value).abs() < 1e-12);
            prop_assert!((v.sigma - both.sigma).abs() < 1e-12);
            // swapping one side exchanges parallel and perpendicular
            let one = visibility_estimate([c[1], c[0], c[3], c[2]]).unwrap();
            prop_assert!((v.value - one.value).abs() < 1e-12);
            let e = correlation_estimate(folded_counts(c)).unwrap();
            let e1 = correlation_estimate(folded_counts([c[1], c[0], c[3], c[2]])).unwrap();
            prop_assert!((e.value + e1.value).abs() < 1e-12);
            prop_assert!((e.sigma - e1.sigma).abs() < 1e-12);
        }

        #[test]
        fn scale_invariance(c in proptest::array::uniform4(1u64..5_000), k in 1u64..50) {
            let v = visibility_estimate(c).unwrap();
            let vk = visibility_estimate(c.map(|x| x * k)).unwrap();
            prop_assert!((v.value - vk.value).abs() < 1e-12);
            prop_assert!((vk.sigma * (k as f64).sqrt() - v.sigma).abs() < 1e-9);
            let e = correlation_estimate(c).unwrap();
            let ek = correlation_estimate(c.map(|x| x * k)).unwrap();
            prop_assert!((e.value - ek.value).abs() < 1e-12);
            prop_assert!(e.value.abs() <= 1.0 && v.value.abs() <= 1.0);
        }
    }
}
