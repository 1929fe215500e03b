//! Flat binary serialization of fitted forests.
//!
//! Layout (all integers little-endian, floats as IEEE-754 bit patterns,
//! so round trips are bit-exact):
//!
//! ```text
//! magic            b"RFSM"
//! version          u32 (currently 1)
//! n_features       u32
//! hyperparams      n_trees u32, criterion u8 (0 = mse),
//!                  min_samples_split u32, min_samples_leaf u32,
//!                  max_features u32, bootstrap u8
//! summary          n_samples u64, sigma_train f64
//! training data    n u64, then n * n_features input f64s, then n targets
//! trees            count u32, then per tree: n_nodes u32 and node records
//! node record      kind u8 (0 leaf / 1 split), feature u32, threshold f64,
//!                  value f64, left u32, right u32
//! ```
//!
//! Nodes are stored in preorder; `left`/`right` index into the tree's node
//! array and always point past the current node.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evo::Genome;
use crate::surrogate::{
    ForestHyperparams, RandomForestModel, SplitCriterion, TrainingSet, TrainingSummary, TreeNode,
};

const MAGIC: &[u8; 4] = b"RFSM";
const VERSION: u32 = 1;

struct FlatNode {
    kind: u8,
    feature: u32,
    threshold: f64,
    value: f64,
    left: u32,
    right: u32,
}

fn flatten(node: &TreeNode, out: &mut Vec<FlatNode>) -> u32 {
    let slot = out.len() as u32;
    match node {
        TreeNode::Leaf { value } => {
            out.push(FlatNode { kind: 0, feature: 0, threshold: 0.0, value: *value, left: 0, right: 0 });
        }
        TreeNode::Split { feature, threshold, left, right } => {
            out.push(FlatNode {
                kind: 1,
                feature: *feature as u32,
                threshold: *threshold,
                value: 0.0,
                left: 0,
                right: 0,
            });
            let left_at = flatten(left, out);
            let right_at = flatten(right, out);
            out[slot as usize].left = left_at;
            out[slot as usize].right = right_at;
        }
    }
    slot
}

fn rebuild(nodes: &[FlatNode], at: u32) -> Result<TreeNode> {
    let node = nodes
        .get(at as usize)
        .ok_or_else(|| Error::ModelFormat(format!("node offset {at} out of range")))?;
    match node.kind {
        0 => Ok(TreeNode::Leaf { value: node.value }),
        1 => {
            if node.left <= at || node.right <= at {
                return Err(Error::ModelFormat(format!(
                    "child offsets must point forward (node {at})"
                )));
            }
            Ok(TreeNode::Split {
                feature: node.feature as usize,
                threshold: node.threshold,
                left: Box::new(rebuild(nodes, node.left)?),
                right: Box::new(rebuild(nodes, node.right)?),
            })
        }
        k => Err(Error::ModelFormat(format!("unknown node kind {k}"))),
    }
}

fn encode(model: &RandomForestModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let n_features = model.data().n_features() as u32;
    buf.extend_from_slice(&n_features.to_le_bytes());

    let hp = model.hyperparams();
    buf.extend_from_slice(&(hp.n_trees as u32).to_le_bytes());
    buf.push(match hp.criterion {
        SplitCriterion::MeanSquaredError => 0,
    });
    buf.extend_from_slice(&(hp.min_samples_split as u32).to_le_bytes());
    buf.extend_from_slice(&(hp.min_samples_leaf as u32).to_le_bytes());
    buf.extend_from_slice(&(hp.max_features as u32).to_le_bytes());
    buf.push(u8::from(hp.bootstrap));

    let summary = model.summary();
    buf.extend_from_slice(&(summary.n_samples as u64).to_le_bytes());
    buf.extend_from_slice(&summary.sigma_train.to_bits().to_le_bytes());

    let data = model.data();
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for genome in data.inputs() {
        for &g in &genome.genes {
            buf.extend_from_slice(&g.to_bits().to_le_bytes());
        }
    }
    for &t in data.targets() {
        buf.extend_from_slice(&t.to_bits().to_le_bytes());
    }

    buf.extend_from_slice(&(model.trees().len() as u32).to_le_bytes());
    for tree in model.trees() {
        let mut flat = Vec::with_capacity(tree.node_count());
        flatten(tree, &mut flat);
        buf.extend_from_slice(&(flat.len() as u32).to_le_bytes());
        for node in &flat {
            buf.push(node.kind);
            buf.extend_from_slice(&node.feature.to_le_bytes());
            buf.extend_from_slice(&node.threshold.to_bits().to_le_bytes());
            buf.extend_from_slice(&node.value.to_bits().to_le_bytes());
            buf.extend_from_slice(&node.left.to_le_bytes());
            buf.extend_from_slice(&node.right.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        if end > self.buf.len() {
            return Err(Error::ModelFormat("file truncated".into()));
        }
        let slice = &self.buf[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn decode(buf: &[u8]) -> Result<RandomForestModel> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let n_features = r.u32()? as usize;

    let hyperparams = ForestHyperparams {
        n_trees: r.u32()? as usize,
        criterion: match r.u8()? {
            0 => SplitCriterion::MeanSquaredError,
            c => return Err(Error::ModelFormat(format!("unknown criterion {c}"))),
        },
        min_samples_split: r.u32()? as usize,
        min_samples_leaf: r.u32()? as usize,
        max_features: r.u32()? as usize,
        bootstrap: r.u8()? != 0,
    };

    let summary = TrainingSummary { n_samples: r.u64()? as usize, sigma_train: r.f64()? };

    let n_samples = r.u64()? as usize;
    let mut inputs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut genes = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            genes.push(r.f64()?);
        }
        inputs.push(Genome::new(genes));
    }
    let mut targets = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        targets.push(r.f64()?);
    }
    let data = TrainingSet::new(inputs, targets)?;

    let n_trees = r.u32()? as usize;
    if n_trees == 0 {
        return Err(Error::ModelFormat("model has no trees".into()));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = r.u32()? as usize;
        let mut flat = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            flat.push(FlatNode {
                kind: r.u8()?,
                feature: r.u32()?,
                threshold: r.f64()?,
                value: r.f64()?,
                left: r.u32()?,
                right: r.u32()?,
            });
        }
        trees.push(rebuild(&flat, 0)?);
    }
    if r.at != buf.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok(RandomForestModel::from_parts(trees, hyperparams, summary, data))
}

/// Writes the model to a flat file that round-trips bit-exactly.
pub fn write_model(model: &RandomForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

/// Reads a model previously written by [`write_model`].
pub fn read_model(path: &Path) -> Result<RandomForestModel> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::surrogate::fit_forest;

    fn fitted_model(seed: u64) -> RandomForestModel {
        use rand::Rng;
        let mut rng = stream(seed, &[]);
        let inputs: Vec<Genome> = (0..40)
            .map(|_| Genome::new(vec![rng.random::<f64>(), rng.random::<f64>() * 3.0]))
            .collect();
        let targets: Vec<f64> =
            inputs.iter().map(|g| g.genes[0].sin() + 0.5 * g.genes[1]).collect();
        let data = TrainingSet::new(inputs, targets).unwrap();
        let hp = ForestHyperparams { n_trees: 7, ..Default::default() };
        fit_forest(&data, &hp, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = fitted_model(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rfm");
        write_model(&model, &path).unwrap();
        let loaded = read_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(encode(&loaded), encode(&model));
        let g = Genome::new(vec![0.3, 1.7]);
        assert_eq!(
            crate::surrogate::predict_forest(&loaded, &g).unwrap().to_bits(),
            crate::surrogate::predict_forest(&model, &g).unwrap().to_bits()
        );
    }

    #[test]
    fn rejects_corrupted_files() {
        let model = fitted_model(2);
        let mut bytes = encode(&model);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::ModelFormat(_))));

        let mut truncated = encode(&model);
        truncated.truncate(truncated.len() - 3);
        assert!(matches!(decode(&truncated), Err(Error::ModelFormat(_))));

        let mut trailing = encode(&model);
        trailing.push(0);
        assert!(matches!(decode(&trailing), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn read_missing_file_reports_path() {
        let err = read_model(Path::new("/nonexistent/model.rfm")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/model.rfm"));
    }
}
