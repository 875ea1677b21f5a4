//! Random instance generation and the on-disk instance format.
//!
//! Two families: finite-scenario instances (a fixed equiprobable scenario
//! set) and open-ended stochastic instances whose durations are sampled by
//! the environment at run time. Deadlines come from a Monte-Carlo quantile
//! of earliest-start makespans.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::project::{validate_network, Activity, Precedence, ProjectNetwork, Scenario};

pub const FORMAT_VERSION: &str = "1";
const MAX_GENERATION_RETRIES: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "omega1")]
    Omega1,
    #[serde(rename = "omega2")]
    Omega2,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Omega1 => write!(f, "omega1"),
            Family::Omega2 => write!(f, "omega2"),
        }
    }
}

/// Generation parameters. Serialized verbatim into the instance file as
/// provenance, so a file can be regenerated from its own header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    /// Number of non-dummy activities (`n - 2` in the experiment grids).
    pub n_nondummy: usize,
    /// Scenario count; meaningful for the finite-scenario family only.
    pub n_scenarios: usize,
    pub arc_prob: f64,
    pub duration_range: (u32, u32),
    pub fixed_cost_range: (f64, f64),
    pub var_cost_range: (f64, f64),
    pub revenue_range: (f64, f64),
    pub mc_replications: usize,
    pub deadline_quantile: f64,
    pub beta: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn omega1(n_nondummy: usize, n_scenarios: usize, seed: u64) -> Self {
        Self {
            family: Family::Omega1,
            n_nondummy,
            n_scenarios,
            ..Self::base(seed)
        }
    }

    pub fn omega2(n_nondummy: usize, seed: u64) -> Self {
        Self {
            family: Family::Omega2,
            n_nondummy,
            n_scenarios: 0,
            ..Self::base(seed)
        }
    }

    fn base(seed: u64) -> Self {
        Self {
            family: Family::Omega2,
            n_nondummy: 1,
            n_scenarios: 0,
            arc_prob: 0.2,
            duration_range: (1, 10),
            fixed_cost_range: (-10.0, -1.0),
            var_cost_range: (-10.0, -1.0),
            revenue_range: (0.0, 100.0),
            mc_replications: 10_000,
            deadline_quantile: 0.90,
            beta: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.arc_prob) {
            return Err(Error::InvalidConfig(format!("arc_prob {} outside [0, 1]", self.arc_prob)));
        }
        if self.n_nondummy < 1 {
            return Err(Error::InvalidConfig("n_nondummy must be at least 1".into()));
        }
        if self.family == Family::Omega1 && self.n_scenarios < 1 {
            return Err(Error::InvalidConfig("finite-scenario family requires n_scenarios >= 1".into()));
        }
        if self.duration_range.0 > self.duration_range.1
            || self.fixed_cost_range.0 > self.fixed_cost_range.1
            || self.var_cost_range.0 > self.var_cost_range.1
            || self.revenue_range.0 > self.revenue_range.1
        {
            return Err(Error::InvalidConfig("empty sampling range".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!("beta {} outside (0, 1)", self.beta)));
        }
        if !(0.0 < self.deadline_quantile && self.deadline_quantile <= 1.0) {
            return Err(Error::InvalidConfig("deadline_quantile outside (0, 1]".into()));
        }
        if self.mc_replications == 0 {
            return Err(Error::InvalidConfig("mc_replications must be positive".into()));
        }
        Ok(())
    }
}

/// A problem instance: network plus, for the finite-scenario family, its
/// equiprobable scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: ProjectNetwork,
    pub scenarios: Option<Vec<Scenario>>,
    pub family: Family,
    pub provenance: Option<GenConfig>,
}

impl Instance {
    pub fn scenario_count(&self) -> usize {
        self.scenarios.as_ref().map_or(0, Vec::len)
    }

    /// Five-activity demonstration instance: a fan 0 -> 1 -> {2, 3} -> 4
    /// with cash flows (0, -90, -5500, -90, +10000) and two equiprobable
    /// scenarios differing only in the duration of activity 3 (1 vs 10).
    pub fn example1() -> Self {
        let activities = vec![
            Activity::dummy(0),
            Activity::new(1, -90.0, 0.0, 0.0, 1, 1),
            Activity::new(2, -5500.0, 0.0, 0.0, 5, 5),
            Activity::new(3, -90.0, 0.0, 0.0, 1, 10),
            Activity::new(4, 0.0, 0.0, 10000.0, 0, 0),
        ];
        let arcs = vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)];
        let network = ProjectNetwork::new(activities, arcs, 0.9, 40);
        let scenarios = vec![
            Scenario::from_durations(&network.activities, vec![0, 1, 5, 1, 0], 0.5),
            Scenario::from_durations(&network.activities, vec![0, 1, 5, 10, 0], 0.5),
        ];
        Self {
            network,
            scenarios: Some(scenarios),
            family: Family::Omega1,
            provenance: None,
        }
    }

    /// Consistency checks beyond network structure: scenario shapes, dummy
    /// durations, probability normalization.
    pub fn validate(&self) -> Result<()> {
        let report = validate_network(&self.network);
        if !report.is_ok() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidNetwork(msgs.join("; ")));
        }
        match (&self.family, &self.scenarios) {
            (Family::Omega1, Some(scenarios)) => {
                if scenarios.is_empty() {
                    return Err(Error::InvalidConfig("finite-scenario instance has no scenarios".into()));
                }
                let n = self.network.node_count();
                let end = self.network.end_node();
                let mut prob_sum = 0.0;
                for (k, s) in scenarios.iter().enumerate() {
                    if s.durations.len() != n || s.cash_flows.len() != n {
                        return Err(Error::DimensionMismatch(format!(
                            "scenario {k} has {} durations / {} cash flows for {n} activities",
                            s.durations.len(),
                            s.cash_flows.len()
                        )));
                    }
                    if s.durations[0] != 0 || s.durations[end] != 0 {
                        return Err(Error::InvalidConfig(format!("scenario {k} assigns nonzero duration to a dummy")));
                    }
                    prob_sum += s.prob;
                }
                if (prob_sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "probabilities must sum to 1 (got {prob_sum})"
                    )));
                }
            }
            (Family::Omega2, None) => {}
            (Family::Omega1, None) => {
                return Err(Error::InvalidConfig("finite-scenario instance has no scenarios".into()))
            }
            (Family::Omega2, Some(_)) => {
                return Err(Error::InvalidConfig("open-ended instance must not carry scenarios".into()))
            }
        }
        Ok(())
    }
}

/// Counters from one generation run, for statistical checks on the arc law.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenStats {
    /// Bernoulli successes of the direct-arc draw.
    pub direct_draws: usize,
    /// Ordered pairs (i, j) with i < j that were offered a draw.
    pub eligible_pairs: usize,
    pub retries: u32,
}

/// Draws one duration from the inclusive integer support.
pub fn sample_duration<R: Rng>(rng: &mut R, d_min: u32, d_max: u32) -> u32 {
    if d_min == d_max {
        d_min
    } else {
        rng.gen_range(d_min..=d_max)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates an instance from the config; a pure function of the seed.
pub fn generate_instance(cfg: &GenConfig) -> Result<Instance> {
    generate_instance_with_stats(cfg).map(|(inst, _)| inst)
}

pub fn generate_instance_with_stats(cfg: &GenConfig) -> Result<(Instance, GenStats)> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut stats = GenStats::default();
    for attempt in 0..MAX_GENERATION_RETRIES {
        stats.retries = attempt;
        let (instance, direct_draws, eligible_pairs) = generate_once(cfg, &mut rng);
        if instance.validate().is_ok() {
            stats.direct_draws = direct_draws;
            stats.eligible_pairs = eligible_pairs;
            return Ok((instance, stats));
        }
    }
    Err(Error::GenerationRetriesExceeded(MAX_GENERATION_RETRIES))
}

#[allow(clippy::needless_range_loop)] // adjacency-matrix index walks
fn generate_once(cfg: &GenConfig, rng: &mut ChaCha12Rng) -> (Instance, usize, usize) {
    let n = cfg.n_nondummy;
    let end = n + 1;

    // Direct arcs over the random topological labeling (ids themselves serve
    // as the labeling; every other ingredient is exchangeable across ids).
    // Each drawn arc brings its transitive arcs into the set.
    let mut reach = vec![vec![false; n + 2]; n + 2];
    let mut direct_draws = 0;
    let mut eligible_pairs = 0;
    for i in 1..=n {
        for j in (i + 1)..=end - 1 {
            eligible_pairs += 1;
            if rng.gen_bool(cfg.arc_prob) {
                direct_draws += 1;
                reach[i][j] = true;
            }
        }
    }
    // Transitive closure over the labeling order.
    for k in 1..=n {
        for i in 1..=n {
            if reach[i][k] {
                for j in (k + 1)..=n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut arcs: Vec<(usize, usize)> = Vec::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            if reach[i][j] {
                arcs.push((i, j));
            }
        }
    }
    // Dummy wiring: sources hang off 0, sinks feed the end node.
    for j in 1..=n {
        if (1..j).all(|i| !reach[i][j]) {
            arcs.push((0, j));
        }
        if (j + 1..=n).all(|k| !reach[j][k]) {
            arcs.push((j, end));
        }
    }

    let mut activities = Vec::with_capacity(n + 2);
    activities.push(Activity::dummy(0));
    for id in 1..=n {
        let fixed = round2(rng.gen_range(cfg.fixed_cost_range.0..cfg.fixed_cost_range.1));
        let var = round2(rng.gen_range(cfg.var_cost_range.0..cfg.var_cost_range.1));
        let rev = round2(rng.gen_range(cfg.revenue_range.0..cfg.revenue_range.1));
        activities.push(Activity::new(id, fixed, var, rev, cfg.duration_range.0, cfg.duration_range.1));
    }
    activities.push(Activity::dummy(end));

    let mut network = ProjectNetwork::new(activities, arcs, cfg.beta, 0);

    let scenarios = match cfg.family {
        Family::Omega1 => {
            let prob = 1.0 / cfg.n_scenarios as f64;
            let mut set = Vec::with_capacity(cfg.n_scenarios);
            for _ in 0..cfg.n_scenarios {
                let durations: Vec<u32> = network
                    .activities
                    .iter()
                    .map(|a| sample_duration(rng, a.d_min, a.d_max))
                    .collect();
                set.push(Scenario::from_durations(&network.activities, durations, prob));
            }
            Some(set)
        }
        Family::Omega2 => None,
    };

    let sampler = match &scenarios {
        Some(set) => DurationSampler::Scenarios(set),
        None => DurationSampler::Support,
    };
    network.deadline = estimate_deadline(&network, sampler, cfg, rng);

    (
        Instance {
            network,
            scenarios,
            family: cfg.family,
            provenance: Some(cfg.clone()),
        },
        direct_draws,
        eligible_pairs,
    )
}

/// How one Monte-Carlo replication draws its duration vector.
#[derive(Debug, Clone, Copy)]
pub enum DurationSampler<'a> {
    /// Pick one scenario uniformly and use its durations.
    Scenarios(&'a [Scenario]),
    /// Draw each activity independently from its duration support.
    Support,
}

/// Monte-Carlo deadline: simulates earliest-start makespans and returns the
/// requested empirical quantile (already integral for integer durations).
pub fn estimate_deadline<R: Rng>(
    net: &ProjectNetwork,
    sampler: DurationSampler<'_>,
    cfg: &GenConfig,
    rng: &mut R,
) -> u32 {
    let prec = Precedence::new(net).expect("estimate_deadline requires an acyclic network");
    let n = net.node_count();
    let mut makespans = Vec::with_capacity(cfg.mc_replications);
    let mut es = vec![0u32; n];
    let mut drawn = vec![0u32; n];
    for _ in 0..cfg.mc_replications {
        es.iter_mut().for_each(|e| *e = 0);
        let durations: &[u32] = match sampler {
            DurationSampler::Scenarios(set) => {
                let idx = rng.gen_range(0..set.len());
                &set[idx].durations
            }
            DurationSampler::Support => {
                for (d, a) in drawn.iter_mut().zip(&net.activities) {
                    *d = sample_duration(rng, a.d_min, a.d_max);
                }
                &drawn
            }
        };
        for &j in &prec.topo {
            let mut earliest = 0u32;
            for &i in &prec.preds[j] {
                earliest = earliest.max(es[i] + durations[i]);
            }
            es[j] = earliest;
        }
        makespans.push(es[n - 1]);
    }
    makespans.sort_unstable();
    let rank = ((cfg.deadline_quantile * makespans.len() as f64).ceil() as usize)
        .clamp(1, makespans.len());
    makespans[rank - 1]
}

// --- On-disk format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: String,
    family: Family,
    beta: f64,
    deadline: u32,
    activities: Vec<Activity>,
    arcs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenarios: Option<Vec<Scenario>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<GenConfig>,
}

/// JSON formatter printing every float with 17 significant digits so that
/// round trips are lossless and byte-stable.
pub(crate) struct F17Formatter;

impl serde_json::ser::Formatter for F17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub(crate) fn to_json_f17<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, F17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_instance<W: Write>(instance: &Instance, mut writer: W) -> Result<()> {
    let mut arcs = instance.network.arcs.clone();
    arcs.sort_unstable();
    let file = InstanceFile {
        version: FORMAT_VERSION.to_string(),
        family: instance.family,
        beta: instance.network.beta,
        deadline: instance.network.deadline,
        activities: instance.network.activities.clone(),
        arcs,
        scenarios: instance.scenarios.clone(),
        provenance: instance.provenance.clone(),
    };
    let bytes = to_json_f17(&file)?;
    writer.write_all(&bytes)?;
    Ok(())
}

pub fn read_instance<R: Read>(mut reader: R) -> Result<Instance> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let instance = Instance {
        network: ProjectNetwork::new(file.activities, file.arcs, file.beta, file.deadline),
        scenarios: file.scenarios,
        family: file.family,
        provenance: file.provenance,
    };
    instance.validate()?;
    Ok(instance)
}

pub fn write_instance_to_path<P: AsRef<Path>>(instance: &Instance, path: P) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_instance(instance, std::io::BufWriter::new(f))
}

pub fn read_instance_from_path<P: AsRef<Path>>(path: P) -> Result<Instance> {
    let f = std::fs::File::open(path)?;
    read_instance(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega1_dummy_durations_are_zero() {
        let cfg = GenConfig::omega1(5, 2, 42);
        let inst = generate_instance(&cfg).unwrap();
        let scenarios = inst.scenarios.as_ref().unwrap();
        assert_eq!(scenarios.len(), 2);
        for s in scenarios {
            assert_eq!(s.durations.len(), 7);
            assert_eq!(s.durations[0], 0);
            assert_eq!(s.durations[6], 0);
            for &d in &s.durations[1..6] {
                assert!((1..=10).contains(&d));
            }
        }
    }

    #[test]
    fn scenario_cash_follows_parameter_rule() {
        let cfg = GenConfig::omega1(6, 3, 7);
        let inst = generate_instance(&cfg).unwrap();
        for s in inst.scenarios.as_ref().unwrap() {
            for (a, (&d, &c)) in inst
                .network
                .activities
                .iter()
                .zip(s.durations.iter().zip(&s.cash_flows))
            {
                assert!((c - a.cash_flow(d)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = GenConfig::omega1(8, 5, 123);
        let a = generate_instance(&cfg).unwrap();
        let b = generate_instance(&cfg).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_instance(&a, &mut buf_a).unwrap();
        write_instance(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn generated_instances_validate() {
        for seed in 0..20 {
            let inst = generate_instance(&GenConfig::omega1(6, 2, seed)).unwrap();
            inst.validate().unwrap();
            let inst = generate_instance(&GenConfig::omega2(6, seed)).unwrap();
            inst.validate().unwrap();
        }
    }

    #[test]
    fn deadline_degenerate_distribution() {
        let inst = Instance::example1();
        let mut net = inst.network.clone();
        // Pin activity 3 to duration 1 so the makespan is always 6.
        net.activities[3].d_min = 1;
        net.activities[3].d_max = 1;
        let cfg = GenConfig::omega2(3, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let delta = estimate_deadline(&net, DurationSampler::Support, &cfg, &mut rng);
        assert_eq!(delta, 6);
    }

    #[test]
    fn deadline_two_point_law_q90_picks_upper() {
        // Example-1 scenario makespans are 6 and 11 with probability 1/2 each.
        let inst = Instance::example1();
        let cfg = GenConfig::omega1(3, 2, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let delta = estimate_deadline(
            &inst.network,
            DurationSampler::Scenarios(inst.scenarios.as_ref().unwrap()),
            &cfg,
            &mut rng,
        );
        assert_eq!(delta, 11);
    }

    #[test]
    fn deadline_uniform_single_activity_q90() {
        // One activity with duration uniform on {1..10}: the 0.9 quantile of
        // the law is 9. At the boundary the empirical quantile can tip to 10;
        // this seed realizes the law's quantile (pinned regression value).
        let activities = vec![Activity::dummy(0), Activity::new(1, -1.0, 0.0, 0.0, 1, 10), Activity::dummy(2)];
        let net = ProjectNetwork::new(activities, vec![(0, 1), (1, 2)], 0.9, 10);
        let cfg = GenConfig::omega2(1, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let delta = estimate_deadline(&net, DurationSampler::Support, &cfg, &mut rng);
        assert_eq!(delta, 9);
    }

    #[test]
    fn deadline_monotone_in_quantile() {
        let inst = generate_instance(&GenConfig::omega2(6, 9)).unwrap();
        let mut cfg = GenConfig::omega2(6, 9);
        cfg.deadline_quantile = 0.90;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let d90 = estimate_deadline(&inst.network, DurationSampler::Support, &cfg, &mut rng);
        cfg.deadline_quantile = 0.95;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let d95 = estimate_deadline(&inst.network, DurationSampler::Support, &cfg, &mut rng);
        assert!(d95 >= d90);
    }

    #[test]
    fn codec_round_trips_example1() {
        let mut inst = Instance::example1();
        inst.provenance = Some(GenConfig::omega1(3, 2, 99));
        let mut buf = Vec::new();
        write_instance(&inst, &mut buf).unwrap();
        let back = read_instance(buf.as_slice()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn codec_round_trips_generated() {
        for seed in [3u64, 17, 40] {
            let inst = generate_instance(&GenConfig::omega1(5, 3, seed)).unwrap();
            let mut buf = Vec::new();
            write_instance(&inst, &mut buf).unwrap();
            let back = read_instance(buf.as_slice()).unwrap();
            assert_eq!(inst, back);
        }
    }

    #[test]
    fn codec_missing_beta_names_field() {
        let doc = r#"{"version":"1","family":"omega2","deadline":10,
            "activities":[],"arcs":[]}"#;
        let err = read_instance(doc.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta"), "error does not name the field: {msg}");
    }

    #[test]
    fn codec_rejects_unknown_version() {
        let doc = r#"{"version":"2","family":"omega2","beta":0.9,"deadline":10,
            "activities":[],"arcs":[]}"#;
        let err = read_instance(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { .. }));
    }

    #[test]
    fn codec_rejects_bad_probability_sum() {
        let mut inst = Instance::example1();
        if let Some(s) = inst.scenarios.as_mut() {
            s[0].prob = 0.4; // sums to 0.9
        }
        let mut buf = Vec::new();
        write_instance(&inst, &mut buf).unwrap();
        let err = read_instance(buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("probabilities must sum to 1"), "{err}");
    }

    #[test]
    fn f17_floats_round_trip_exactly() {
        let values = [0.1f64, -7.25, 1.0 / 3.0, 9.87654321e-7, 1e17];
        for v in values {
            let bytes = to_json_f17(&v).unwrap();
            let text = String::from_utf8(bytes).unwrap();
            let back: f64 = serde_json::from_str(text.trim()).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{text}");
        }
    }
}
