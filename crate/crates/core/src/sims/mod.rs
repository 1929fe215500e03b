//! Evaluation targets: the revenue/cost model shared by the plant
//! simulators, mole-balance objectives, and outcome accounting.

mod cps;
mod psa;

pub use cps::{
    alpha_mean, cps1_gene_specs, cps2_gene_specs, sample_alpha, sample_alpha_raw, simulate_cps1,
    simulate_cps2, CpsConfig,
};
pub use psa::{evaluate_psa_proxy, psa_gene_specs, psa_objectives, psa_proxy_front};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Revenue and cost rates applied to a simulation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    /// Revenue per cubic metre of final product.
    pub final_product_rev: f64,
    pub flare1: f64,
    pub flare2: f64,
    pub flare3: f64,
    pub flare4: f64,
    /// Fixed cost per tank plus cost per cubic metre of capacity.
    pub tank_fixed: f64,
    pub tank_per_m3: f64,
    /// Fixed cost per pump unit plus cost per cubic metre of capacity.
    pub pump_fixed: f64,
    pub pump_per_m3: f64,
    pub maintenance_per_hr: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            final_product_rev: 6042.0,
            flare1: 2848.0,
            flare2: 3907.0,
            flare3: 2848.0,
            flare4: 3907.0,
            tank_fixed: 9.94e7,
            tank_per_m3: 1.52e6,
            pump_fixed: 4.44e6,
            pump_per_m3: 2.96e5,
            maintenance_per_hr: 474_036.0,
        }
    }
}

impl CostTable {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.final_product_rev,
            self.flare1,
            self.flare2,
            self.flare3,
            self.flare4,
            self.tank_fixed,
            self.tank_per_m3,
            self.pump_fixed,
            self.pump_per_m3,
            self.maintenance_per_hr,
        ];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid("cost rates must be finite and non-negative"));
        }
        Ok(())
    }

    fn flare_rate(&self, index: usize) -> f64 {
        match index {
            0 => self.flare1,
            1 => self.flare2,
            2 => self.flare3,
            _ => self.flare4,
        }
    }
}

/// Accounting of one simulated year: volumes, installed equipment, and
/// the resulting revenue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub final_product_m3: f64,
    /// Flared volume per flare, in plant order.
    pub flare_m3: Vec<f64>,
    pub tank_capacities: Vec<f64>,
    /// Capacity of every pump unit ever procured: the installed pumps
    /// first, then spares in procurement order.
    pub pump_capacities: Vec<f64>,
    pub n_installed_pumps: usize,
    pub maintenance_hours: f64,
    /// External feed over the horizon; recycled volume is not feed.
    pub total_feed_m3: f64,
    pub end_tank_levels: Vec<f64>,
    pub end_recycle_m3: f64,
    /// Mean recycle fraction over the horizon (0 for systems without a
    /// recycle stream).
    pub mean_recycle_fraction: f64,
    pub revenue: f64,
}

impl SimOutcome {
    pub fn n_tanks(&self) -> usize {
        self.tank_capacities.len()
    }

    pub fn n_pumps(&self) -> usize {
        self.pump_capacities.len()
    }

    pub fn spares_procured(&self) -> usize {
        self.pump_capacities.len() - self.n_installed_pumps
    }

    /// Column names matching [`SimOutcome::csv_row`] for this outcome's
    /// flare and tank counts.
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["final_product_m3".to_string()];
        for i in 1..=self.flare_m3.len() {
            cols.push(format!("flare{i}_m3"));
        }
        for i in 1..=self.tank_capacities.len() {
            cols.push(format!("tank{i}_capacity"));
        }
        for i in 1..=self.n_installed_pumps {
            cols.push(format!("pump{i}_capacity"));
        }
        cols.extend(
            ["spares_procured", "maintenance_hours", "total_feed_m3", "revenue"]
                .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cells = vec![format!("{}", self.final_product_m3)];
        cells.extend(self.flare_m3.iter().map(|v| format!("{v}")));
        cells.extend(self.tank_capacities.iter().map(|v| format!("{v}")));
        cells.extend(
            self.pump_capacities[..self.n_installed_pumps].iter().map(|v| format!("{v}")),
        );
        cells.push(format!("{}", self.spares_procured()));
        cells.push(format!("{}", self.maintenance_hours));
        cells.push(format!("{}", self.total_feed_m3));
        cells.push(format!("{}", self.revenue));
        cells.join(",")
    }
}

/// Product revenue minus flare, tank, pump and maintenance costs.
pub fn revenue(outcome: &SimOutcome, costs: &CostTable) -> f64 {
    debug_assert!(outcome.flare_m3.len() <= 4);
    let mut total = costs.final_product_rev * outcome.final_product_m3;
    for (i, &v) in outcome.flare_m3.iter().enumerate() {
        total -= costs.flare_rate(i) * v;
    }
    for &cap in &outcome.tank_capacities {
        total -= costs.tank_fixed + costs.tank_per_m3 * cap;
    }
    for &cap in &outcome.pump_capacities {
        total -= costs.pump_fixed + costs.pump_per_m3 * cap;
    }
    total -= costs.maintenance_per_hr * outcome.maintenance_hours;
    total
}

/// Mole bookkeeping behind the purity and recovery objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoleAccounting {
    pub moles_co2_product: f64,
    pub total_moles_product: f64,
    pub moles_co2_fed: f64,
}

impl MoleAccounting {
    pub fn new(moles_co2_product: f64, total_moles_product: f64, moles_co2_fed: f64) -> Result<Self> {
        if moles_co2_product < 0.0 || total_moles_product < 0.0 || moles_co2_fed < 0.0 {
            return Err(Error::invalid("mole counts must be non-negative"));
        }
        if moles_co2_product > total_moles_product {
            return Err(Error::invalid("product CO2 cannot exceed total product moles"));
        }
        if moles_co2_product > moles_co2_fed {
            return Err(Error::invalid("product CO2 cannot exceed the CO2 fed"));
        }
        Ok(Self { moles_co2_product, total_moles_product, moles_co2_fed })
    }
}

/// CO2 fraction of the product stream, as a percentage.
pub fn purity(m: &MoleAccounting) -> Result<f64> {
    if m.total_moles_product <= 0.0 {
        return Err(Error::UndefinedQuantity("purity of an empty product stream".into()));
    }
    Ok(100.0 * m.moles_co2_product / m.total_moles_product)
}

/// Captured share of the CO2 fed into the cycle, as a percentage.
pub fn recovery(m: &MoleAccounting) -> Result<f64> {
    if m.moles_co2_fed <= 0.0 {
        return Err(Error::UndefinedQuantity("recovery with no CO2 fed".into()));
    }
    Ok(100.0 * m.moles_co2_product / m.moles_co2_fed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_outcome() -> SimOutcome {
        SimOutcome {
            final_product_m3: 0.0,
            flare_m3: vec![],
            tank_capacities: vec![],
            pump_capacities: vec![],
            n_installed_pumps: 0,
            maintenance_hours: 0.0,
            total_feed_m3: 0.0,
            end_tank_levels: vec![],
            end_recycle_m3: 0.0,
            mean_recycle_fraction: 0.0,
            revenue: 0.0,
        }
    }

    #[test]
    fn revenue_of_nothing_is_zero() {
        assert_eq!(revenue(&empty_outcome(), &CostTable::default()), 0.0);
    }

    #[test]
    fn revenue_of_one_cubic_metre() {
        let outcome = SimOutcome { final_product_m3: 1.0, ..empty_outcome() };
        assert_eq!(revenue(&outcome, &CostTable::default()), 6042.0);
    }

    #[test]
    fn revenue_of_single_tank() {
        let outcome = SimOutcome { tank_capacities: vec![500.0], ..empty_outcome() };
        let expected = -(9.94e7 + 1.52e6 * 500.0);
        assert_eq!(revenue(&outcome, &CostTable::default()), expected);
        assert_eq!(expected, -8.594e8);
    }

    #[test]
    fn flare_rates_follow_plant_order() {
        let outcome = SimOutcome { flare_m3: vec![1.0, 1.0, 1.0, 1.0], ..empty_outcome() };
        let expected = -(2848.0 + 3907.0 + 2848.0 + 3907.0);
        assert_eq!(revenue(&outcome, &CostTable::default()), expected);
    }

    #[test]
    fn purity_examples() {
        let m = MoleAccounting::new(50.0, 100.0, 200.0).unwrap();
        assert_eq!(purity(&m).unwrap(), 50.0);
        let full = MoleAccounting::new(95.0, 95.0, 100.0).unwrap();
        assert_eq!(purity(&full).unwrap(), 100.0);
        let mixed = MoleAccounting::new(90.0, 95.0, 100.0).unwrap();
        assert!((purity(&mixed).unwrap() - 100.0 * 90.0 / 95.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_examples() {
        let all = MoleAccounting::new(100.0, 120.0, 100.0).unwrap();
        assert_eq!(recovery(&all).unwrap(), 100.0);
        let none = MoleAccounting::new(0.0, 10.0, 100.0).unwrap();
        assert_eq!(recovery(&none).unwrap(), 0.0);
        let mixed = MoleAccounting::new(90.0, 95.0, 100.0).unwrap();
        assert_eq!(recovery(&mixed).unwrap(), 90.0);
    }

    #[test]
    fn degenerate_moles_are_errors() {
        let m = MoleAccounting::new(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(purity(&m), Err(Error::UndefinedQuantity(_))));
        assert!(matches!(recovery(&m), Err(Error::UndefinedQuantity(_))));
        assert!(MoleAccounting::new(2.0, 1.0, 10.0).is_err());
        assert!(MoleAccounting::new(2.0, 3.0, 1.0).is_err());
        assert!(MoleAccounting::new(-1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn outcome_csv_is_numeric_and_aligned() {
        let outcome = SimOutcome {
            final_product_m3: 10.0,
            flare_m3: vec![1.0, 2.0],
            tank_capacities: vec![600.0, 700.0],
            pump_capacities: vec![100.0, 110.0, 110.0],
            n_installed_pumps: 1,
            maintenance_hours: 3.0,
            total_feed_m3: 13.0,
            end_tank_levels: vec![0.0, 0.0],
            end_recycle_m3: 0.0,
            mean_recycle_fraction: 0.0,
            revenue: 42.0,
        };
        let header = outcome.csv_header();
        let row = outcome.csv_row();
        assert_eq!(header.split(',').count(), row.split(',').count());
        for cell in row.split(',') {
            cell.parse::<f64>().unwrap();
        }
        assert_eq!(outcome.spares_procured(), 2);
    }
}
