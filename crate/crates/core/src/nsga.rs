//! Pareto machinery: dominance, fast non-dominated sorting, crowding
//! distance, and the combined rank-then-crowding order used for
//! multi-objective survival and selection.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::evo::{Direction, FitnessVector, Population};

/// Per-objective optimisation senses governing the dominance relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominanceOrdering {
    directions: Vec<Direction>,
}

impl DominanceOrdering {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("dominance ordering needs at least one objective"));
        }
        Ok(Self { directions })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// The population split into non-dominated fronts.
///
/// `fronts[0]` is the non-dominated set; `rank` is 1-based, so members of
/// `fronts[k]` carry rank `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontPartition {
    pub fronts: Vec<Vec<usize>>,
    pub rank: Vec<usize>,
}

/// Crowding distances; boundary solutions hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdingScores {
    pub distance: Vec<f64>,
}

/// True when `a` is no worse than `b` in every objective and strictly
/// better in at least one.
pub fn dominates(a: &FitnessVector, b: &FitnessVector, ord: &DominanceOrdering) -> Result<bool> {
    if a.len() != b.len() || a.len() != ord.len() {
        return Err(Error::invalid(format!(
            "objective counts disagree: {} vs {} vs {} directions",
            a.len(),
            b.len(),
            ord.len()
        )));
    }
    let mut strictly_better = false;
    for ((&av, &bv), &dir) in a.values().iter().zip(b.values()).zip(ord.directions()) {
        let (better, worse) = match dir {
            Direction::Maximize => (av > bv, av < bv),
            Direction::Minimize => (av < bv, av > bv),
        };
        if worse {
            return Ok(false);
        }
        strictly_better |= better;
    }
    Ok(strictly_better)
}

/// Peels the population into non-dominated fronts.
///
/// Builds, per member, the set it dominates and its domination count;
/// the zero-count members form front 1, and decrementing the counts of
/// their dominated sets peels each subsequent front.
pub fn fast_non_dominated_sort(
    objs: &[FitnessVector],
    ord: &DominanceOrdering,
) -> Result<FrontPartition> {
    if objs.is_empty() {
        return Err(Error::invalid("cannot sort an empty objective list"));
    }
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dominator_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&objs[p], &objs[q], ord)? {
                dominated_by_me[p].push(q);
                dominator_count[q] += 1;
            } else if dominates(&objs[q], &objs[p], ord)? {
                dominated_by_me[q].push(p);
                dominator_count[p] += 1;
            }
        }
    }

    let mut rank = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| dominator_count[p] == 0).collect();
    let mut front_index = 1usize;
    while !current.is_empty() {
        for &p in &current {
            rank[p] = front_index;
        }
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                dominator_count[q] -= 1;
                if dominator_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
        front_index += 1;
    }
    Ok(FrontPartition { fronts, rank })
}

/// Density estimate within one front: per objective, boundary members get
/// `+inf` and interior members accumulate the normalized gap between
/// their neighbours. Objectives with zero span contribute nothing.
pub fn crowding_distance(
    front_objs: &[FitnessVector],
    ord: &DominanceOrdering,
) -> Result<CrowdingScores> {
    if front_objs.is_empty() {
        return Err(Error::invalid("cannot compute crowding of an empty front"));
    }
    let n = front_objs.len();
    for f in front_objs {
        if f.len() != ord.len() {
            return Err(Error::invalid("objective count disagrees with ordering"));
        }
    }
    let mut distance = vec![0.0f64; n];
    for m in 0..ord.len() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            front_objs[a].values()[m]
                .partial_cmp(&front_objs[b].values()[m])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        distance[idx[0]] = f64::INFINITY;
        distance[idx[n - 1]] = f64::INFINITY;
        let span = front_objs[idx[n - 1]].values()[m] - front_objs[idx[0]].values()[m];
        if span > 0.0 {
            for w in 1..n.saturating_sub(1) {
                let gap = front_objs[idx[w + 1]].values()[m] - front_objs[idx[w - 1]].values()[m];
                distance[idx[w]] += gap / span;
            }
        }
    }
    Ok(CrowdingScores { distance })
}

/// Total order over the population: ascending front rank, then descending
/// crowding distance, then member index. Every member must be evaluated.
pub fn nsga_rank_order(pop: &Population) -> Result<Vec<usize>> {
    for (i, m) in pop.members.iter().enumerate() {
        if !m.is_evaluated() {
            return Err(Error::contract(format!("member {i} is unevaluated")));
        }
    }
    if pop.is_empty() {
        return Ok(Vec::new());
    }
    let objs: Vec<FitnessVector> =
        pop.members.iter().map(|m| m.fitness().unwrap().clone()).collect();
    let ord = DominanceOrdering::new(objs[0].directions().to_vec())?;
    let partition = fast_non_dominated_sort(&objs, &ord)?;

    let mut crowding = vec![0.0f64; pop.len()];
    for front in &partition.fronts {
        let front_objs: Vec<FitnessVector> = front.iter().map(|&i| objs[i].clone()).collect();
        let scores = crowding_distance(&front_objs, &ord)?;
        for (slot, &i) in front.iter().enumerate() {
            crowding[i] = scores.distance[slot];
        }
    }

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        partition.rank[a]
            .cmp(&partition.rank[b])
            .then_with(|| crowding[b].partial_cmp(&crowding[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    Ok(order)
}
