//! CART regression trees fitted by recursive best-split search under the
//! mean-squared-error criterion.

use rand::Rng;

use crate::error::{Error, Result};
use crate::evo::Genome;
use crate::surrogate::{ForestHyperparams, TrainingSet};

/// One node of a fitted regression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { value: f64 },
}

impl TreeNode {
    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n).max(0.0)
}

/// Best (feature, threshold) over the candidate features, scanning
/// midpoints between consecutive distinct values. Ties in gain keep the
/// lowest feature index, then the lowest threshold.
fn best_split(
    inputs: &[Genome],
    targets: &[f64],
    indices: &[usize],
    candidates: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = indices.len() as f64;
    let total_sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();
    let parent_sse = sse(total_sum, total_sq, n);

    let mut best: Option<SplitChoice> = None;
    let mut sorted = indices.to_vec();
    for &feature in candidates {
        sorted.sort_by(|&a, &b| {
            inputs[a].genes[feature]
                .partial_cmp(&inputs[b].genes[feature])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for j in 0..sorted.len() - 1 {
            let y = targets[sorted[j]];
            left_sum += y;
            left_sq += y * y;
            let (v, v_next) =
                (inputs[sorted[j]].genes[feature], inputs[sorted[j + 1]].genes[feature]);
            if v >= v_next {
                continue;
            }
            let n_left = j + 1;
            let n_right = sorted.len() - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let child_sse = sse(left_sum, left_sq, n_left as f64)
                + sse(total_sum - left_sum, total_sq - left_sq, n_right as f64);
            let gain = parent_sse - child_sse;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice { feature, threshold: (v + v_next) / 2.0, gain });
            }
        }
    }
    best
}

fn build_node<R: Rng>(
    inputs: &[Genome],
    targets: &[f64],
    indices: Vec<usize>,
    hp: &ForestHyperparams,
    n_features: usize,
    rng: &mut R,
) -> TreeNode {
    let n = indices.len();
    let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / n as f64;
    let pure = indices.iter().all(|&i| targets[i] == targets[indices[0]]);
    if n < hp.min_samples_split || pure {
        return TreeNode::Leaf { value: mean };
    }

    let k = hp.max_features.min(n_features);
    let mut candidates: Vec<usize> =
        rand::seq::index::sample(rng, n_features, k).into_iter().collect();
    candidates.sort_unstable();

    match best_split(inputs, targets, &indices, &candidates, hp.min_samples_leaf) {
        None => TreeNode::Leaf { value: mean },
        Some(choice) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| inputs[i].genes[choice.feature] < choice.threshold);
            let left = build_node(inputs, targets, left_idx, hp, n_features, rng);
            let right = build_node(inputs, targets, right_idx, hp, n_features, rng);
            TreeNode::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Fits one CART on the whole training set.
pub fn fit_tree<R: Rng>(
    data: &TrainingSet,
    hp: &ForestHyperparams,
    rng: &mut R,
) -> Result<TreeNode> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a tree on empty data"));
    }
    hp.validate()?;
    let indices: Vec<usize> = (0..data.len()).collect();
    Ok(build_node(data.inputs(), data.targets(), indices, hp, data.n_features(), rng))
}

/// Fits one CART on an index multiset over the training set (used for
/// bootstrap resamples).
pub(crate) fn fit_tree_on_indices<R: Rng>(
    data: &TrainingSet,
    indices: Vec<usize>,
    hp: &ForestHyperparams,
    rng: &mut R,
) -> TreeNode {
    build_node(data.inputs(), data.targets(), indices, hp, data.n_features(), rng)
}

/// Routes the genome through the splits (gene < threshold goes left) and
/// returns the leaf value.
pub fn predict_tree(tree: &TreeNode, genome: &Genome) -> Result<f64> {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { value } => return Ok(*value),
            TreeNode::Split { feature, threshold, left, right } => {
                let Some(&gene) = genome.genes.get(*feature) else {
                    return Err(Error::invalid(format!(
                        "genome length {} too short for split feature {}",
                        genome.len(),
                        feature
                    )));
                };
                node = if gene < *threshold { left } else { right };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn one_d(data: &[(f64, f64)]) -> TrainingSet {
        TrainingSet::new(
            data.iter().map(|&(x, _)| Genome::new(vec![x])).collect(),
            data.iter().map(|&(_, y)| y).collect(),
        )
        .unwrap()
    }

    fn step_data() -> TrainingSet {
        let mut pts = Vec::new();
        for i in 1..=10 {
            pts.push((-f64::from(i), 0.0));
            pts.push((f64::from(i), 1.0));
        }
        one_d(&pts)
    }

    fn training_mse(tree: &TreeNode, data: &TrainingSet) -> f64 {
        let mut acc = 0.0;
        for (g, &y) in data.inputs().iter().zip(data.targets()) {
            let p = predict_tree(tree, g).unwrap();
            acc += (p - y) * (p - y);
        }
        acc / data.len() as f64
    }

    /// Exhaustive scan over every midpoint of the single feature.
    fn brute_best_threshold(data: &TrainingSet) -> (f64, f64) {
        let mut xs: Vec<(f64, f64)> = data
            .inputs()
            .iter()
            .map(|g| g.genes[0])
            .zip(data.targets().iter().copied())
            .collect();
        xs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut best = (f64::NAN, f64::INFINITY);
        for j in 0..xs.len() - 1 {
            if xs[j].0 >= xs[j + 1].0 {
                continue;
            }
            let thr = (xs[j].0 + xs[j + 1].0) / 2.0;
            let (l, r): (Vec<_>, Vec<_>) = xs.iter().partition(|p| p.0 < thr);
            let mean = |v: &[(f64, f64)]| v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64;
            let sse = |v: &[(f64, f64)]| {
                let m = mean(v);
                v.iter().map(|p| (p.1 - m) * (p.1 - m)).sum::<f64>()
            };
            let total = sse(&l) + sse(&r);
            if total < best.1 {
                best = (thr, total);
            }
        }
        best
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let data = one_d(&[(0.0, 7.0), (1.0, 7.0), (2.0, 7.0)]);
        let tree = fit_tree(&data, &ForestHyperparams::default(), &mut stream(1, &[])).unwrap();
        assert_eq!(tree, TreeNode::Leaf { value: 7.0 });
    }

    #[test]
    fn step_function_fits_exactly_at_depth_one() {
        let data = step_data();
        let tree = fit_tree(&data, &ForestHyperparams::default(), &mut stream(2, &[])).unwrap();
        assert_eq!(tree.depth(), 1);
        match &tree {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > -1.0 && *threshold < 1.0);
                let (oracle_thr, oracle_sse) = brute_best_threshold(&data);
                assert_eq!(*threshold, oracle_thr);
                assert_eq!(oracle_sse, 0.0);
            }
            TreeNode::Leaf { .. } => panic!("expected a split at the root"),
        }
        assert_eq!(training_mse(&tree, &data), 0.0);
    }

    #[test]
    fn split_choice_matches_threshold_scan_oracle() {
        use rand::Rng;
        let mut rng = stream(3, &[]);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> =
                (0..30).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
            let data = one_d(&pts);
            let tree =
                fit_tree(&data, &ForestHyperparams::default(), &mut stream(4, &[])).unwrap();
            if let TreeNode::Split { threshold, .. } = &tree {
                let (oracle_thr, _) = brute_best_threshold(&data);
                assert_eq!(*threshold, oracle_thr);
            }
        }
    }

    #[test]
    fn two_samples_fit_exactly() {
        let data = one_d(&[(0.0, 1.0), (1.0, 5.0)]);
        let tree = fit_tree(&data, &ForestHyperparams::default(), &mut stream(5, &[])).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(training_mse(&tree, &data), 0.0);
    }

    #[test]
    fn fit_rejects_empty_data() {
        let data = TrainingSet::new(vec![], vec![]).unwrap();
        assert!(fit_tree(&data, &ForestHyperparams::default(), &mut stream(0, &[])).is_err());
    }

    #[test]
    fn predict_single_leaf() {
        let tree = TreeNode::Leaf { value: 7.0 };
        assert_eq!(predict_tree(&tree, &Genome::new(vec![0.0, 1.0])).unwrap(), 7.0);
        assert_eq!(predict_tree(&tree, &Genome::new(vec![])).unwrap(), 7.0);
    }

    #[test]
    fn predict_routes_through_step_tree() {
        let data = step_data();
        let tree = fit_tree(&data, &ForestHyperparams::default(), &mut stream(6, &[])).unwrap();
        assert_eq!(predict_tree(&tree, &Genome::new(vec![-1.0])).unwrap(), 0.0);
        assert_eq!(predict_tree(&tree, &Genome::new(vec![3.0])).unwrap(), 1.0);
    }

    #[test]
    fn predict_is_piecewise_constant() {
        let data = step_data();
        let tree = fit_tree(&data, &ForestHyperparams::default(), &mut stream(7, &[])).unwrap();
        let a = predict_tree(&tree, &Genome::new(vec![4.2])).unwrap();
        let b = predict_tree(&tree, &Genome::new(vec![9.9])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_rejects_short_genome() {
        let tree = TreeNode::Split {
            feature: 3,
            threshold: 0.0,
            left: Box::new(TreeNode::Leaf { value: 0.0 }),
            right: Box::new(TreeNode::Leaf { value: 1.0 }),
        };
        assert!(predict_tree(&tree, &Genome::new(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let data = one_d(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (3.0, 1.5)]);
        let hp = ForestHyperparams { min_samples_leaf: 2, ..ForestHyperparams::default() };
        let tree = fit_tree(&data, &hp, &mut stream(8, &[])).unwrap();
        fn check(node: &TreeNode, data: &TrainingSet, indices: Vec<usize>, min_leaf: usize) {
            if let TreeNode::Split { feature, threshold, left, right } = node {
                let (l, r): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| data.inputs()[i].genes[*feature] < *threshold);
                assert!(l.len() >= min_leaf && r.len() >= min_leaf);
                check(left, data, l, min_leaf);
                check(right, data, r, min_leaf);
            }
        }
        check(&tree, &data, (0..data.len()).collect(), 2);
    }
}
