//! Stochastic discrete-time simulators for the two plant layouts.
//!
//! Both plants run an hourly loop over one year. A train is a front tank
//! fed by two external streams, a first processing unit, a back tank, and
//! a pump feeding the final processing unit. Tanks flare their overflow.
//! Pumps fail at a fixed hourly probability and are repaired faster when
//! the shared spares pool has a unit in stock; the pool reorders below
//! its minimum level with a delivery lead time.
//!
//! The layout with parallel trains shares one spares pool between two
//! trains. The layout with a recycle loop runs a single train whose
//! product partially re-enters the front tank: the recycled fraction is
//! drawn each hour around a mean that falls linearly with the maintenance
//! hours spent on the system.
//!
//! Every stochastic concern (feeds, failures, recycle fraction) draws
//! from its own derived stream, so raising a tank capacity or the
//! maintenance hours never perturbs the other draws of a seeded run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{GeneSpec, Genome};
use crate::rng;
use crate::sims::{revenue, CostTable, SimOutcome};

/// Upper bound of the maintenance-hours decision (15% of the yearly cycle).
pub const MAINTENANCE_MAX_HOURS: f64 = 1314.0;

const FEED_STREAMS_PER_TRAIN: usize = 2;

const STREAM_FEED: u64 = 0x10;
const STREAM_FAILURE: u64 = 0x11;
const STREAM_RECYCLE: u64 = 0x12;

/// Plant parameterization shared by both layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpsConfig {
    pub horizon_hours: u32,
    /// Mean external feed per stream; each train is fed by two streams.
    pub feed_rate_per_stream: f64,
    /// Hourly feed is uniform in `rate * (1 - v) ..= rate * (1 + v)`.
    pub feed_variation: f64,
    /// Throughput cap of the unit between the front and back tanks.
    pub process1_cap: f64,
    /// Throughput cap of the final unit downstream of the pump.
    pub process2_cap: f64,
    pub pump_failure_prob: f64,
    pub repair_hours_with_spare: u32,
    pub repair_hours_without_spare: u32,
    pub spare_lead_time_hours: u32,
    /// Recycle-fraction mean at zero maintenance hours.
    pub alpha_max: f64,
    /// Recycle-fraction mean at the maintenance-hours upper bound.
    pub alpha_min: f64,
    /// When set, the pump idles for the first `maintenance_hours` of the
    /// year instead of treating maintenance as a cost-only lever.
    pub maintenance_pauses_production: bool,
    pub costs: CostTable,
}

impl Default for CpsConfig {
    fn default() -> Self {
        Self {
            horizon_hours: 8760,
            feed_rate_per_stream: 50.0,
            feed_variation: 0.5,
            process1_cap: 105.0,
            process2_cap: 150.0,
            pump_failure_prob: 0.001,
            repair_hours_with_spare: 4,
            repair_hours_without_spare: 24,
            spare_lead_time_hours: 72,
            alpha_max: 0.5,
            alpha_min: 0.05,
            maintenance_pauses_production: false,
            costs: CostTable::default(),
        }
    }
}

impl CpsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_hours == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        let positive = [
            self.feed_rate_per_stream,
            self.process1_cap,
            self.process2_cap,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("feed rates and process caps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pump_failure_prob) {
            return Err(Error::invalid("pump failure probability must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.feed_variation) {
            return Err(Error::invalid("feed variation must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.alpha_min)
            || !(0.0..=1.0).contains(&self.alpha_max)
            || self.alpha_min > self.alpha_max
        {
            return Err(Error::invalid("alpha bounds must satisfy 0 <= min <= max <= 1"));
        }
        self.costs.validate()
    }
}

fn tank_spec(name: &str) -> GeneSpec {
    GeneSpec::new(name, 500.0, 1000.0).expect("static bounds")
}

fn pump_spec(name: &str) -> GeneSpec {
    GeneSpec::new(name, 60.0, 120.0).expect("static bounds")
}

/// Decision bounds for the parallel-train plant.
pub fn cps1_gene_specs() -> Vec<GeneSpec> {
    vec![
        tank_spec("tank1_capacity"),
        tank_spec("tank2_capacity"),
        tank_spec("tank3_capacity"),
        tank_spec("tank4_capacity"),
        pump_spec("pump1_capacity"),
        pump_spec("pump2_capacity"),
        GeneSpec::new("min_spares_level", 0.0, 20.0).expect("static bounds"),
        GeneSpec::new("spares_per_purchase", 1.0, 20.0).expect("static bounds"),
    ]
}

/// Decision bounds for the recycle-loop plant.
pub fn cps2_gene_specs() -> Vec<GeneSpec> {
    vec![
        tank_spec("tank1_capacity"),
        tank_spec("tank2_capacity"),
        pump_spec("pump1_capacity"),
        GeneSpec::new("min_spares_level", 0.0, 20.0).expect("static bounds"),
        GeneSpec::new("spares_per_purchase", 1.0, 20.0).expect("static bounds"),
        GeneSpec::new("maintenance_hours", 0.0, MAINTENANCE_MAX_HOURS).expect("static bounds"),
    ]
}

/// Mean recycle fraction as a function of maintenance hours: linear from
/// `alpha_max` at zero down to `alpha_min` at the upper bound.
pub fn alpha_mean(maintenance_hours: f64, cfg: &CpsConfig) -> f64 {
    let t = (maintenance_hours / MAINTENANCE_MAX_HOURS).clamp(0.0, 1.0);
    cfg.alpha_max - (cfg.alpha_max - cfg.alpha_min) * t
}

/// One draw of the recycle fraction before truncation: normal with a
/// standard deviation of 10% of the mean.
pub fn sample_alpha_raw<R: Rng>(mu: f64, rng: &mut R) -> f64 {
    let sigma = 0.1 * mu;
    if sigma <= 0.0 {
        return mu;
    }
    Normal::new(mu, sigma).expect("finite parameters").sample(rng)
}

/// Recycle fraction truncated to [0, 1]: resamples a bounded number of
/// times, then clamps.
pub fn sample_alpha<R: Rng>(mu: f64, rng: &mut R) -> f64 {
    for _ in 0..100 {
        let a = sample_alpha_raw(mu, rng);
        if (0.0..=1.0).contains(&a) {
            return a;
        }
    }
    sample_alpha_raw(mu, rng).clamp(0.0, 1.0)
}

struct SparesPool {
    stock: u32,
    min_level: u32,
    order_quantity: u32,
    outstanding: Option<u32>,
    units_procured: u32,
}

impl SparesPool {
    fn new(min_level: u32, order_quantity: u32) -> Self {
        // The initial stock fills the pool to its minimum level and
        // counts as procured.
        Self {
            stock: min_level,
            min_level,
            order_quantity,
            outstanding: None,
            units_procured: min_level,
        }
    }

    fn take_spare(&mut self) -> bool {
        if self.stock > 0 {
            self.stock -= 1;
            true
        } else {
            false
        }
    }

    fn step(&mut self, hour: u32, lead_time: u32) {
        if let Some(due) = self.outstanding {
            if hour >= due {
                self.stock += self.order_quantity;
                self.outstanding = None;
            }
        }
        if self.outstanding.is_none() && self.stock < self.min_level {
            self.outstanding = Some(hour + lead_time);
            self.units_procured += self.order_quantity;
        }
    }
}

struct Train {
    front_cap: f64,
    back_cap: f64,
    pump_cap: f64,
    front: f64,
    back: f64,
    down_hours: u32,
    feed_rng: ChaCha8Rng,
    failure_rng: ChaCha8Rng,
}

impl Train {
    fn new(front_cap: f64, back_cap: f64, pump_cap: f64, seed: u64, index: u64) -> Self {
        Self {
            front_cap,
            back_cap,
            pump_cap,
            front: 0.0,
            back: 0.0,
            down_hours: 0,
            feed_rng: rng::stream(seed, &[STREAM_FEED, index]),
            failure_rng: rng::stream(seed, &[STREAM_FAILURE, index]),
        }
    }

    fn draw_feed(&mut self, cfg: &CpsConfig) -> f64 {
        let mut total = 0.0;
        for _ in 0..FEED_STREAMS_PER_TRAIN {
            let u: f64 = self.feed_rng.random();
            let rate = cfg.feed_rate_per_stream;
            total += rate * (1.0 - cfg.feed_variation) + u * 2.0 * cfg.feed_variation * rate;
        }
        total
    }

    /// Advances one hour given this hour's inflow; returns the volumes
    /// flared at the front and back tanks and the pumped output.
    fn step(
        &mut self,
        inflow: f64,
        cfg: &CpsConfig,
        pool: &mut SparesPool,
        paused: bool,
    ) -> (f64, f64, f64) {
        self.front += inflow;
        let front_flare = (self.front - self.front_cap).max(0.0);
        self.front = self.front.min(self.front_cap);

        let transfer = cfg.process1_cap.min(self.front);
        self.front -= transfer;
        self.back += transfer;
        let back_flare = (self.back - self.back_cap).max(0.0);
        self.back = self.back.min(self.back_cap);

        if self.down_hours == 0 && !paused {
            let u: f64 = self.failure_rng.random();
            if u < cfg.pump_failure_prob {
                self.down_hours = if pool.take_spare() {
                    cfg.repair_hours_with_spare
                } else {
                    cfg.repair_hours_without_spare
                };
            }
        }
        let output = if self.down_hours > 0 {
            self.down_hours -= 1;
            0.0
        } else if paused {
            0.0
        } else {
            self.pump_cap.min(cfg.process2_cap).min(self.back)
        };
        self.back -= output;
        (front_flare, back_flare, output)
    }
}

fn check_genome(genome: &Genome, specs: &[GeneSpec]) -> Result<()> {
    if genome.len() != specs.len() {
        return Err(Error::invalid(format!(
            "expected a {}-gene genome, got {}",
            specs.len(),
            genome.len()
        )));
    }
    for (g, s) in genome.genes.iter().zip(specs) {
        if !s.contains(*g) {
            return Err(Error::invalid(format!(
                "gene {} = {g} outside bounds [{}, {}]",
                s.name, s.lower, s.upper
            )));
        }
    }
    Ok(())
}

fn spares_as_count(gene: f64) -> u32 {
    gene.round().max(0.0) as u32
}

/// Simulates the parallel-train plant for one year.
///
/// Genes: four tank capacities, two pump capacities, the minimum spares
/// level, and the spares order quantity.
pub fn simulate_cps1(genome: &Genome, cfg: &CpsConfig, seed: u64) -> Result<SimOutcome> {
    check_genome(genome, &cps1_gene_specs())?;
    cfg.validate()?;
    let g = &genome.genes;
    let mut pool =
        SparesPool::new(spares_as_count(g[6]), spares_as_count(g[7]).max(1));
    let mut trains = [
        Train::new(g[0], g[1], g[4], seed, 0),
        Train::new(g[2], g[3], g[5], seed, 1),
    ];

    let mut flares = [0.0f64; 4];
    let mut product = 0.0;
    let mut total_feed = 0.0;
    for hour in 0..cfg.horizon_hours {
        pool.step(hour, cfg.spare_lead_time_hours);
        for (t, train) in trains.iter_mut().enumerate() {
            let feed = train.draw_feed(cfg);
            total_feed += feed;
            let (front_flare, back_flare, output) = train.step(feed, cfg, &mut pool, false);
            flares[2 * t] += front_flare;
            flares[2 * t + 1] += back_flare;
            product += output;
        }
    }

    let spare_capacity = g[4].max(g[5]);
    let mut pump_capacities = vec![g[4], g[5]];
    pump_capacities.extend(std::iter::repeat_n(spare_capacity, pool.units_procured as usize));
    let mut outcome = SimOutcome {
        final_product_m3: product,
        flare_m3: flares.to_vec(),
        tank_capacities: vec![g[0], g[1], g[2], g[3]],
        pump_capacities,
        n_installed_pumps: 2,
        maintenance_hours: 0.0,
        total_feed_m3: total_feed,
        end_tank_levels: trains.iter().flat_map(|t| [t.front, t.back]).collect(),
        end_recycle_m3: 0.0,
        mean_recycle_fraction: 0.0,
        revenue: 0.0,
    };
    outcome.revenue = revenue(&outcome, &cfg.costs);
    Ok(outcome)
}

/// Simulates the recycle-loop plant for one year.
///
/// Genes: two tank capacities, one pump capacity, the minimum spares
/// level, the spares order quantity, and the maintenance hours.
pub fn simulate_cps2(genome: &Genome, cfg: &CpsConfig, seed: u64) -> Result<SimOutcome> {
    check_genome(genome, &cps2_gene_specs())?;
    cfg.validate()?;
    let g = &genome.genes;
    let maintenance_hours = g[5];
    let mut pool =
        SparesPool::new(spares_as_count(g[3]), spares_as_count(g[4]).max(1));
    let mut train = Train::new(g[0], g[1], g[2], seed, 0);
    let mut recycle_rng = rng::stream(seed, &[STREAM_RECYCLE]);
    let mu = alpha_mean(maintenance_hours, cfg);
    let pause_hours =
        if cfg.maintenance_pauses_production { maintenance_hours.round() as u32 } else { 0 };

    let mut flares = [0.0f64; 2];
    let mut product = 0.0;
    let mut total_feed = 0.0;
    let mut recycle_buffer = 0.0;
    let mut alpha_sum = 0.0;
    for hour in 0..cfg.horizon_hours {
        pool.step(hour, cfg.spare_lead_time_hours);
        let feed = train.draw_feed(cfg);
        total_feed += feed;
        let inflow = feed + recycle_buffer;
        let paused = hour < pause_hours;
        let (front_flare, back_flare, output) = train.step(inflow, cfg, &mut pool, paused);
        flares[0] += front_flare;
        flares[1] += back_flare;
        let alpha = sample_alpha(mu, &mut recycle_rng);
        alpha_sum += alpha;
        product += (1.0 - alpha) * output;
        recycle_buffer = alpha * output;
    }

    let mut pump_capacities = vec![g[2]];
    pump_capacities.extend(std::iter::repeat_n(g[2], pool.units_procured as usize));
    let mut outcome = SimOutcome {
        final_product_m3: product,
        flare_m3: flares.to_vec(),
        tank_capacities: vec![g[0], g[1]],
        pump_capacities,
        n_installed_pumps: 1,
        maintenance_hours,
        total_feed_m3: total_feed,
        end_tank_levels: vec![train.front, train.back],
        end_recycle_m3: recycle_buffer,
        mean_recycle_fraction: alpha_sum / f64::from(cfg.horizon_hours),
        revenue: 0.0,
    };
    outcome.revenue = revenue(&outcome, &cfg.costs);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::init_random_population;
    use crate::rng::stream;

    fn cps1_genome() -> Genome {
        Genome::new(vec![600.0, 700.0, 800.0, 900.0, 110.0, 105.0, 3.0, 5.0])
    }

    fn cps2_genome(maintenance: f64) -> Genome {
        Genome::new(vec![600.0, 700.0, 110.0, 3.0, 5.0, maintenance])
    }

    fn mass_balance_residual(outcome: &SimOutcome) -> f64 {
        let accounted = outcome.final_product_m3
            + outcome.flare_m3.iter().sum::<f64>()
            + outcome.end_tank_levels.iter().sum::<f64>()
            + outcome.end_recycle_m3;
        (outcome.total_feed_m3 - accounted).abs() / outcome.total_feed_m3.max(1.0)
    }

    #[test]
    fn cps1_rejects_out_of_bounds_genome() {
        let mut genes = cps1_genome().genes;
        genes[0] = 400.0;
        let err = simulate_cps1(&Genome::new(genes), &CpsConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn cps1_lossless_when_nothing_binds() {
        // Low steady feed, no failures: every cubic metre fed leaves as
        // product within the year.
        let cfg = CpsConfig {
            feed_rate_per_stream: 10.0,
            feed_variation: 0.0,
            pump_failure_prob: 0.0,
            ..CpsConfig::default()
        };
        let outcome = simulate_cps1(&cps1_genome(), &cfg, 5).unwrap();
        assert!(outcome.flare_m3.iter().all(|&f| f == 0.0));
        let expected_feed = 2.0 * 2.0 * 10.0 * 8760.0;
        assert!((outcome.total_feed_m3 - expected_feed).abs() < 1e-6);
        assert!((outcome.final_product_m3 - expected_feed).abs() < 1e-6);
    }

    #[test]
    fn cps1_same_seed_same_outcome() {
        let cfg = CpsConfig::default();
        let a = simulate_cps1(&cps1_genome(), &cfg, 9).unwrap();
        let b = simulate_cps1(&cps1_genome(), &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_cps1(&cps1_genome(), &cfg, 10).unwrap();
        assert_ne!(a.final_product_m3, c.final_product_m3);
    }

    #[test]
    fn cps_mass_balance_on_random_genomes() {
        let cfg = CpsConfig::default();
        let mut rng = stream(11, &[]);
        let pop1 = init_random_population(&cps1_gene_specs(), 25, &mut rng).unwrap();
        for (i, m) in pop1.members.iter().enumerate() {
            let outcome = simulate_cps1(&m.genome, &cfg, i as u64).unwrap();
            assert!(mass_balance_residual(&outcome) < 1e-6, "cps1 genome {i}");
        }
        let pop2 = init_random_population(&cps2_gene_specs(), 25, &mut rng).unwrap();
        for (i, m) in pop2.members.iter().enumerate() {
            let outcome = simulate_cps2(&m.genome, &cfg, i as u64).unwrap();
            assert!(mass_balance_residual(&outcome) < 1e-6, "cps2 genome {i}");
        }
    }

    #[test]
    fn revenue_is_self_consistent() {
        let cfg = CpsConfig::default();
        let o1 = simulate_cps1(&cps1_genome(), &cfg, 3).unwrap();
        assert_eq!(o1.revenue, revenue(&o1, &cfg.costs));
        let o2 = simulate_cps2(&cps2_genome(100.0), &cfg, 3).unwrap();
        assert_eq!(o2.revenue, revenue(&o2, &cfg.costs));
    }

    #[test]
    fn raising_tank_capacity_never_increases_flaring() {
        let cfg = CpsConfig::default();
        for seed in 0..5 {
            for tank_gene in 0..4 {
                let mut low = cps1_genome();
                low.genes[tank_gene] = 500.0;
                let mut high = low.clone();
                high.genes[tank_gene] = 1000.0;
                let flared = |g: &Genome| {
                    simulate_cps1(g, &cfg, seed).unwrap().flare_m3.iter().sum::<f64>()
                };
                assert!(
                    flared(&high) <= flared(&low) + 1e-9,
                    "seed {seed} tank {tank_gene}"
                );
            }
        }
    }

    #[test]
    fn raising_maintenance_never_increases_mean_alpha() {
        let cfg = CpsConfig::default();
        for seed in 0..5 {
            let low = simulate_cps2(&cps2_genome(0.0), &cfg, seed).unwrap();
            let mid = simulate_cps2(&cps2_genome(600.0), &cfg, seed).unwrap();
            let high = simulate_cps2(&cps2_genome(MAINTENANCE_MAX_HOURS), &cfg, seed).unwrap();
            assert!(high.mean_recycle_fraction <= mid.mean_recycle_fraction);
            assert!(mid.mean_recycle_fraction <= low.mean_recycle_fraction);
        }
    }

    #[test]
    fn alpha_mean_is_monotone_in_maintenance() {
        let cfg = CpsConfig::default();
        assert!(alpha_mean(MAINTENANCE_MAX_HOURS, &cfg) < alpha_mean(0.0, &cfg));
        assert_eq!(alpha_mean(0.0, &cfg), cfg.alpha_max);
        assert!((alpha_mean(MAINTENANCE_MAX_HOURS, &cfg) - cfg.alpha_min).abs() < 1e-12);
    }

    #[test]
    fn alpha_spread_is_ten_percent_of_mean() {
        let mut rng = stream(13, &[]);
        let mu = 0.3;
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_alpha_raw(mu, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((cv - 0.10).abs() <= 0.01, "coefficient of variation {cv}");
    }

    #[test]
    fn max_maintenance_raises_product_before_costs() {
        let cfg = CpsConfig { pump_failure_prob: 0.0, ..CpsConfig::default() };
        let low = simulate_cps2(&cps2_genome(0.0), &cfg, 21).unwrap();
        let high = simulate_cps2(&cps2_genome(MAINTENANCE_MAX_HOURS), &cfg, 21).unwrap();
        assert!(high.final_product_m3 > low.final_product_m3);
    }

    #[test]
    fn maintenance_pause_reduces_product() {
        let cfg = CpsConfig { maintenance_pauses_production: true, ..CpsConfig::default() };
        let base = CpsConfig::default();
        let paused = simulate_cps2(&cps2_genome(1000.0), &cfg, 8).unwrap();
        let running = simulate_cps2(&cps2_genome(1000.0), &base, 8).unwrap();
        assert!(paused.final_product_m3 < running.final_product_m3);
    }

    #[test]
    fn spares_pool_reorders_and_charges_units() {
        // Guarantee failures so spares are consumed and reordered.
        let cfg = CpsConfig { pump_failure_prob: 0.2, ..CpsConfig::default() };
        let outcome = simulate_cps1(&cps1_genome(), &cfg, 2).unwrap();
        assert!(outcome.spares_procured() > 3, "expected reorders beyond the initial stock");
        assert_eq!(outcome.n_installed_pumps, 2);
        assert_eq!(outcome.pump_capacities[0], 110.0);
        // Shared spares are priced at the larger pump duty.
        assert!(outcome.pump_capacities[2..].iter().all(|&c| c == 110.0));
    }
}
