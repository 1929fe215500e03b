//! Deterministic two-objective proxy for the adsorption-cycle problem.
//!
//! The proxy keeps the optimisation-relevant structure of the real
//! column model — six bounded decisions and two conflicting maximisation
//! objectives with a known front — while staying cheap and exactly
//! reproducible. Decisions are normalized to the unit cube; the first
//! coordinate trades purity against recovery and the rest drag the
//! solution away from the front.

use crate::error::{Error, Result};
use crate::evo::{GeneSpec, Genome};
use crate::sims::MoleAccounting;

const FED_MOLES: f64 = 100.0;
const MIN_PURITY_FRACTION: f64 = 1e-12;

/// Decision bounds for the adsorption-cycle proxy.
pub fn psa_gene_specs() -> Vec<GeneSpec> {
    vec![
        GeneSpec::new("adsorption_pressure_bar", 1.0, 10.0).expect("static bounds"),
        GeneSpec::new("adsorption_time_s", 10.0, 1000.0).expect("static bounds"),
        GeneSpec::new("light_reflux_ratio", 0.01, 0.99).expect("static bounds"),
        GeneSpec::new("feed_velocity_m_s", 0.1, 2.0).expect("static bounds"),
        GeneSpec::new("heavy_reflux_ratio", 0.0, 1.0).expect("static bounds"),
        GeneSpec::new("purge_pressure_bar", 0.1, 0.5).expect("static bounds"),
    ]
}

fn fractions(genome: &Genome) -> Result<(f64, f64)> {
    let specs = psa_gene_specs();
    if genome.len() != specs.len() {
        return Err(Error::invalid(format!(
            "expected a {}-gene genome, got {}",
            specs.len(),
            genome.len()
        )));
    }
    let mut unit = [0.0f64; 6];
    for (i, (g, s)) in genome.genes.iter().zip(&specs).enumerate() {
        if !s.contains(*g) {
            return Err(Error::invalid(format!(
                "gene {} = {g} outside bounds [{}, {}]",
                s.name, s.lower, s.upper
            )));
        }
        unit[i] = (g - s.lower) / s.range();
    }
    let f1 = unit[0];
    let g = 1.0 + 9.0 * unit[1..].iter().sum::<f64>() / 5.0;
    let f2 = g * (1.0 - (f1 / g).sqrt());
    Ok((1.0 - f1, 1.0 - f2 / 10.0))
}

/// Evaluates the proxy, returning the mole accounting whose purity and
/// recovery reproduce the underlying objective pair.
pub fn evaluate_psa_proxy(genome: &Genome) -> Result<MoleAccounting> {
    let (purity_frac, recovery_frac) = fractions(genome)?;
    let co2_product = FED_MOLES * recovery_frac;
    let total_product = co2_product / purity_frac.max(MIN_PURITY_FRACTION);
    MoleAccounting::new(co2_product, total_product, FED_MOLES)
}

/// Convenience pair (purity %, recovery %) of the proxy.
pub fn psa_objectives(genome: &Genome) -> Result<[f64; 2]> {
    let (purity_frac, recovery_frac) = fractions(genome)?;
    Ok([100.0 * purity_frac, 100.0 * recovery_frac])
}

/// Dense sampling of the analytic front in (purity %, recovery %):
/// recovery = 100 - 10 * (1 - sqrt(1 - purity/100)).
pub fn psa_proxy_front(n_points: usize) -> Vec<[f64; 2]> {
    assert!(n_points >= 2, "a front needs at least two points");
    (0..n_points)
        .map(|i| {
            let purity_frac = i as f64 / (n_points - 1) as f64;
            let u1 = 1.0 - purity_frac;
            let recovery_frac = 1.0 - (1.0 - u1.sqrt()) / 10.0;
            [100.0 * purity_frac, 100.0 * recovery_frac]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::init_random_population;
    use crate::sims::{purity, recovery};

    fn genome_from_unit(unit: &[f64; 6]) -> Genome {
        let specs = psa_gene_specs();
        Genome::new(
            unit.iter().zip(&specs).map(|(u, s)| s.lower + u * s.range()).collect(),
        )
    }

    #[test]
    fn origin_of_unit_cube_hits_known_values() {
        let m = evaluate_psa_proxy(&genome_from_unit(&[0.0; 6])).unwrap();
        assert!((purity(&m).unwrap() - 100.0).abs() < 1e-9);
        assert!((recovery(&m).unwrap() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn proxy_is_deterministic() {
        let g = genome_from_unit(&[0.3, 0.1, 0.7, 0.2, 0.9, 0.4]);
        assert_eq!(evaluate_psa_proxy(&g).unwrap(), evaluate_psa_proxy(&g).unwrap());
    }

    #[test]
    fn proxy_rejects_out_of_bounds() {
        let mut genes = genome_from_unit(&[0.5; 6]).genes;
        genes[0] = 12.0;
        assert!(evaluate_psa_proxy(&Genome::new(genes)).is_err());
        assert!(evaluate_psa_proxy(&Genome::new(vec![1.0; 5])).is_err());
    }

    #[test]
    fn objectives_round_trip_through_moles() {
        let mut rng = crate::rng::stream(3, &[]);
        let pop = init_random_population(&psa_gene_specs(), 200, &mut rng).unwrap();
        for m in &pop.members {
            let [p, r] = psa_objectives(&m.genome).unwrap();
            let moles = evaluate_psa_proxy(&m.genome).unwrap();
            assert!((purity(&moles).unwrap() - p).abs() < 1e-9);
            assert!((recovery(&moles).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_tail_genes_lie_on_the_front() {
        let front = psa_proxy_front(512);
        for u1 in [0.0, 0.1, 0.35, 0.6, 0.99] {
            let [p, r] = psa_objectives(&genome_from_unit(&[u1, 0.0, 0.0, 0.0, 0.0, 0.0]))
                .unwrap();
            let nearest = front
                .iter()
                .map(|z| (z[0] - p).hypot(z[1] - r))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 0.25, "({p}, {r}) sits {nearest} away from the front");
        }
    }

    #[test]
    fn no_sample_dominates_the_analytic_front() {
        let front = psa_proxy_front(256);
        let mut rng = crate::rng::stream(4, &[]);
        let pop = init_random_population(&psa_gene_specs(), 2000, &mut rng).unwrap();
        for m in &pop.members {
            let [p, r] = psa_objectives(&m.genome).unwrap();
            let dominates_some = front
                .iter()
                .any(|z| p >= z[0] && r >= z[1] && (p > z[0] || r > z[1]));
            assert!(!dominates_some, "sampled point ({p}, {r}) dominates the front");
        }
    }
}
