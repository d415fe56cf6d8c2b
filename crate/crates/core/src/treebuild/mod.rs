//! Fixed-point clustering and the backward merge tree.
//!
//! At the oldest checkpoint every data point seeds a mean-field trajectory; converged
//! magnetizations are clustered into fixed points. Moving to younger checkpoints, the
//! cluster representatives are propagated and clustered again. A layer enters the tree
//! whenever the number of clusters drops; the clusters that fall together become the
//! children of a common node.

mod dbscan;
mod metrics;
mod newick;

use serde::{Deserialize, Serialize};

use crate::dataset::OneHotDataset;
use crate::error::{Error, Result};
use crate::meanfield::{init_from_data, solve_all, FixedPointResult, MagnetizationState, Origin, TapConfig, Variant};
use crate::model::CheckpointStore;

pub use dbscan::{dbscan, neighborhoods};
pub use metrics::{adjusted_rand_index, classes_recovered};
pub use newick::{export_newick, parse_newick, NewickNode, BRANCH_SCALE};

/// Clustered mean-field solutions at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSet {
    pub age: u64,
    pub points: Vec<MagnetizationState>,
    pub converged: Vec<bool>,
    /// Cluster of each point; ids are `0..representatives.len()`, numbered by first
    /// occurrence.
    pub cluster_ids: Vec<usize>,
    /// Coordinate-wise mean of each cluster's members.
    pub representatives: Vec<MagnetizationState>,
    /// Clusters made of a single non-converged point far from every fixed point.
    pub unsettled: Vec<bool>,
}

impl FixedPointSet {
    pub fn n_clusters(&self) -> usize {
        self.representatives.len()
    }

    pub fn n_unsettled(&self) -> usize {
        self.unsettled.iter().filter(|&&u| u).count()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Groups mean-field results into fixed points. Converged states are clustered with
/// DBSCAN (`min_pts = 1`) in `(f, m)` coordinates; a non-converged state joins the
/// nearest cluster representative within `eps`, otherwise it forms its own cluster
/// flagged unsettled.
pub fn cluster_fixed_points(age: u64, results: &[FixedPointResult], eps: f64) -> Result<FixedPointSet> {
    if results.is_empty() {
        return Err(Error::data("no mean-field results to cluster"));
    }
    if !(eps > 0.0) {
        return Err(Error::config("eps must be positive"));
    }
    let n_f = results[0].state.f.len();
    let coords: Vec<Vec<f64>> = results.iter().map(|r| r.state.coordinates()).collect();
    let settled: Vec<usize> = (0..results.len()).filter(|&k| results[k].converged).collect();
    let settled_coords: Vec<Vec<f64>> = settled.iter().map(|&k| coords[k].clone()).collect();
    let labels = dbscan(&settled_coords, eps, 1);

    let mut raw: Vec<Option<usize>> = vec![None; results.len()];
    let mut n_raw = 0;
    for (&k, l) in settled.iter().zip(&labels) {
        let l = l.expect("min_pts = 1 leaves no noise");
        raw[k] = Some(l);
        n_raw = n_raw.max(l + 1);
    }
    let centroid = |members: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; coords[0].len()];
        for &k in members {
            c.iter_mut().zip(&coords[k]).for_each(|(a, b)| *a += b);
        }
        c.iter_mut().for_each(|a| *a /= members.len() as f64);
        c
    };
    let settled_centroids: Vec<Vec<f64>> = (0..n_raw)
        .map(|c| centroid(&(0..results.len()).filter(|&k| raw[k] == Some(c)).collect::<Vec<_>>()))
        .collect();
    let mut unsettled_raw = Vec::new();
    for k in 0..results.len() {
        if raw[k].is_some() {
            continue;
        }
        let nearest = settled_centroids
            .iter()
            .enumerate()
            .map(|(c, x)| (c, distance(x, &coords[k])))
            .filter(|&(_, d)| d <= eps)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        raw[k] = Some(match nearest {
            Some((c, _)) => c,
            None => {
                unsettled_raw.push(n_raw);
                n_raw += 1;
                n_raw - 1
            }
        });
    }

    // renumber by first occurrence
    let mut renumber = vec![usize::MAX; n_raw];
    let mut cluster_ids = Vec::with_capacity(results.len());
    let mut next = 0;
    for r in raw.iter().map(|r| r.unwrap()) {
        if renumber[r] == usize::MAX {
            renumber[r] = next;
            next += 1;
        }
        cluster_ids.push(renumber[r]);
    }
    let mut unsettled = vec![false; next];
    for r in unsettled_raw {
        unsettled[renumber[r]] = true;
    }
    let representatives = (0..next)
        .map(|c| {
            let members: Vec<usize> = (0..results.len()).filter(|&k| cluster_ids[k] == c).collect();
            MagnetizationState::from_coordinates(&centroid(&members), n_f, Origin::FixedPoint(c))
        })
        .collect();
    Ok(FixedPointSet {
        age,
        points: results.iter().map(|r| r.state.clone()).collect(),
        converged: results.iter().map(|r| r.converged).collect(),
        cluster_ids,
        representatives,
        unsettled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub tap: TapConfig,
    pub eps: f64,
    /// Checkpoints younger than this are ignored.
    pub min_age: Option<u64>,
    /// Checkpoints older than this are ignored.
    pub max_age: Option<u64>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            tap: TapConfig::default(),
            eps: 1.0,
            min_age: None,
            max_age: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub id: usize,
    /// Checkpoint age; leaves sit one update past the oldest checkpoint, a synthetic
    /// root below the youngest.
    pub age: i64,
    /// Data index for leaves.
    pub sample: Option<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Sorted data indices below this node.
    pub members: Vec<usize>,
    /// Fixed-point magnetizations; absent for leaves.
    pub representative: Option<MagnetizationState>,
    pub unsettled: bool,
    pub synthetic: bool,
}

/// Fixed-point statistics of one processed checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeRecord {
    pub age: u64,
    pub n_fixed_points: usize,
    pub n_nonconverged: usize,
    pub n_unsettled: usize,
    pub materialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub age: i64,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeTree {
    pub variant: Variant,
    pub eps: f64,
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    /// Leaf node of each data index.
    pub leaves: Vec<usize>,
    /// Materialized layers, oldest first.
    pub layers: Vec<Layer>,
    /// Processed checkpoints, oldest first.
    pub records: Vec<AgeRecord>,
    pub leaf_names: Option<Vec<String>>,
}

impl MergeTree {
    pub fn n_samples(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_name(&self, m: usize) -> String {
        match &self.leaf_names {
            Some(names) => names[m].clone(),
            None => m.to_string(),
        }
    }

    pub fn with_leaf_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_samples() {
            return Err(Error::shape(format!("{} names for {} leaves", names.len(), self.n_samples())));
        }
        self.leaf_names = Some(names);
        Ok(self)
    }

    /// Cluster index of every data point within layer `layer`.
    pub fn layer_partition(&self, layer: usize) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.n_samples()];
        for (c, &id) in self.layers[layer].nodes.iter().enumerate() {
            for &m in &self.nodes[id].members {
                labels[m] = c;
            }
        }
        labels
    }

    /// Member sets of the nodes of layer `layer`.
    pub fn layer_groups(&self, layer: usize) -> Vec<Vec<usize>> {
        self.layers[layer].nodes.iter().map(|&id| self.nodes[id].members.clone()).collect()
    }

    /// Youngest materialized layer with at least `min_nodes` nodes.
    pub fn shallowest_layer_with(&self, min_nodes: usize) -> Option<usize> {
        (0..self.layers.len()).rev().find(|&l| self.layers[l].nodes.len() >= min_nodes)
    }

    /// Checks the structural invariants: one root reaching every node, ages strictly
    /// decreasing towards the root, member sets equal to the union of the children's,
    /// every data index in exactly one leaf, layers strictly shrinking towards the root
    /// and each layer refining all younger ones.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Tree(msg));
        let n = self.nodes.len();
        let m = self.n_samples();
        if self.root >= n {
            return fail(format!("root {} out of range", self.root));
        }
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id != k {
                return fail(format!("node at position {k} has id {}", node.id));
            }
            match node.parent {
                None if k != self.root => return fail(format!("node {k} has no parent but is not the root")),
                Some(_) if k == self.root => return fail("root has a parent".into()),
                Some(p) if p >= n => return fail(format!("node {k} has parent {p} out of range")),
                Some(p) => {
                    if !self.nodes[p].children.contains(&k) {
                        return fail(format!("node {k} is not among the children of its parent {p}"));
                    }
                    if self.nodes[p].age >= node.age {
                        return fail(format!("node {k} (age {}) is not older than its parent {p} (age {})", node.age, self.nodes[p].age));
                    }
                }
                None => {}
            }
            match node.sample {
                Some(s) => {
                    if !node.children.is_empty() || node.members != [s] || self.leaves.get(s) != Some(&k) {
                        return fail(format!("leaf {k} is inconsistent with sample {s}"));
                    }
                }
                None => {
                    if node.children.is_empty() {
                        return fail(format!("internal node {k} has no children"));
                    }
                    let mut union: Vec<usize> = Vec::new();
                    for &c in &node.children {
                        if c >= n || self.nodes[c].parent != Some(k) {
                            return fail(format!("child {c} of node {k} does not point back"));
                        }
                        union.extend(&self.nodes[c].members);
                    }
                    union.sort_unstable();
                    if union.windows(2).any(|w| w[0] == w[1]) {
                        return fail(format!("children of node {k} overlap"));
                    }
                    if union != node.members {
                        return fail(format!("members of node {k} differ from the union of its children"));
                    }
                }
            }
        }
        // reachability
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        let mut count = 0;
        while let Some(k) = stack.pop() {
            if std::mem::replace(&mut seen[k], true) {
                return fail(format!("node {k} reached twice"));
            }
            count += 1;
            stack.extend(&self.nodes[k].children);
        }
        if count != n {
            return fail(format!("{} of {n} nodes unreachable from the root", n - count));
        }
        if self.nodes[self.root].members != (0..m).collect::<Vec<_>>() {
            return fail("root does not contain every data index".into());
        }
        for (s, &leaf) in self.leaves.iter().enumerate() {
            if leaf >= n || self.nodes[leaf].sample != Some(s) {
                return fail(format!("leaf entry of sample {s} is wrong"));
            }
        }
        // layers
        let mut partitions = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 && layer.nodes.len() >= self.layers[l - 1].nodes.len() {
                return fail(format!("layer {l} does not have fewer nodes than layer {}", l - 1));
            }
            if l > 0 && layer.age >= self.layers[l - 1].age {
                return fail(format!("layer {l} is not younger than layer {}", l - 1));
            }
            let mut covered: Vec<usize> = layer.nodes.iter().flat_map(|&id| self.nodes[id].members.iter().copied()).collect();
            covered.sort_unstable();
            if covered != (0..m).collect::<Vec<_>>() {
                return fail(format!("layer {l} is not a partition of the data"));
            }
            partitions.push(self.layer_partition(l));
        }
        for older in 0..partitions.len() {
            for younger in older + 1..partitions.len() {
                for &id in &self.layers[older].nodes {
                    let members = &self.nodes[id].members;
                    let label = partitions[younger][members[0]];
                    if members.iter().any(|&s| partitions[younger][s] != label) {
                        return fail(format!("layer {older} does not refine layer {younger}"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn mean_state(states: &[&MagnetizationState]) -> MagnetizationState {
    let n_f = states[0].f.len();
    let mut c = vec![0.0; n_f + states[0].m.len()];
    for s in states {
        c.iter_mut().zip(s.coordinates()).for_each(|(a, b)| *a += b);
    }
    c.iter_mut().for_each(|a| *a /= states.len() as f64);
    MagnetizationState::from_coordinates(&c, n_f, Origin::Unknown)
}

/// Builds the merge tree backward through the checkpoints of `store`.
pub fn build_tree<S: CheckpointStore + ?Sized>(store: &S, data: &OneHotDataset, config: &TreeConfig) -> Result<MergeTree> {
    config.tap.validate()?;
    if !(config.eps > 0.0) {
        return Err(Error::config("eps must be positive"));
    }
    let mut ages: Vec<u64> = store
        .ages()
        .into_iter()
        .filter(|&a| config.min_age.is_none_or(|lo| a >= lo) && config.max_age.is_none_or(|hi| a <= hi))
        .collect();
    ages.sort_unstable();
    let Some(&oldest) = ages.last() else {
        return Err(Error::data("no checkpoints in the selected age range"));
    };
    let n_samples = data.n_samples();

    let model = store.load(oldest)?;
    if model.n_visible() != data.n_visible() || model.n_states() != data.n_states() {
        return Err(Error::shape(format!(
            "checkpoint {oldest} is {}x{}, data is {}x{}",
            model.n_visible(),
            model.n_states(),
            data.n_visible(),
            data.n_states()
        )));
    }
    let shape = model.shape();
    let starts: Vec<MagnetizationState> = (0..n_samples)
        .map(|m| {
            let mut s = init_from_data(&model, data.sample(m))?;
            s.origin = Origin::Data(m);
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let set = cluster_fixed_points(oldest, &solve_all(&model, &starts, &config.tap)?, config.eps)?;

    let mut nodes: Vec<TreeNode> = (0..n_samples)
        .map(|m| TreeNode {
            id: m,
            age: oldest as i64 + 1,
            sample: Some(m),
            parent: None,
            children: Vec::new(),
            members: vec![m],
            representative: None,
            unsettled: false,
            synthetic: false,
        })
        .collect();
    let mut layers = Vec::new();
    let mut records = Vec::new();

    // One new node per cluster, adopting the current nodes mapped into it.
    let materialize = |nodes: &mut Vec<TreeNode>, age: i64, current: &[usize], mapping: &[usize], set: &FixedPointSet| {
        let first = nodes.len();
        for c in 0..set.n_clusters() {
            let id = first + c;
            let children: Vec<usize> = (0..current.len()).filter(|&j| mapping[j] == c).map(|j| current[j]).collect();
            let mut members: Vec<usize> = children.iter().flat_map(|&ch| nodes[ch].members.clone()).collect();
            members.sort_unstable();
            for &ch in &children {
                nodes[ch].parent = Some(id);
            }
            nodes.push(TreeNode {
                id,
                age,
                sample: None,
                parent: None,
                children,
                members,
                representative: Some(set.representatives[c].clone()),
                unsettled: set.unsettled[c],
                synthetic: false,
            });
        }
        (first..first + set.n_clusters()).collect::<Vec<usize>>()
    };

    let leaf_ids: Vec<usize> = (0..n_samples).collect();
    let mut current = materialize(&mut nodes, oldest as i64, &leaf_ids, &set.cluster_ids, &set);
    layers.push(Layer {
        age: oldest as i64,
        nodes: current.clone(),
    });
    records.push(AgeRecord {
        age: oldest,
        n_fixed_points: set.n_clusters(),
        n_nonconverged: set.converged.iter().filter(|&&c| !c).count(),
        n_unsettled: set.n_unsettled(),
        materialized: true,
    });
    let mut reps = set.representatives;
    log::info!("age {oldest}: {} fixed points from {n_samples} data points", reps.len());

    for &age in ages.iter().rev().skip(1) {
        let model = store.load(age)?;
        if model.shape() != shape {
            return Err(Error::shape(format!("checkpoint {age} has shape {:?}, expected {shape:?}", model.shape())));
        }
        let set = cluster_fixed_points(age, &solve_all(&model, &reps, &config.tap)?, config.eps)?;
        let materialized = set.n_clusters() < reps.len();
        if materialized {
            current = materialize(&mut nodes, age as i64, &current, &set.cluster_ids, &set);
            layers.push(Layer {
                age: age as i64,
                nodes: current.clone(),
            });
        } else {
            // a bijection: carry the nodes over in the new cluster order
            let mut reordered = vec![0; current.len()];
            for (j, &c) in set.cluster_ids.iter().enumerate() {
                reordered[c] = current[j];
            }
            current = reordered;
        }
        log::debug!("age {age}: {} fixed points", set.n_clusters());
        records.push(AgeRecord {
            age,
            n_fixed_points: set.n_clusters(),
            n_nonconverged: set.converged.iter().filter(|&&c| !c).count(),
            n_unsettled: set.n_unsettled(),
            materialized,
        });
        reps = set.representatives;
    }

    let root = if current.len() == 1 {
        current[0]
    } else {
        let youngest = ages[0] as i64;
        let age = if youngest > 0 { 0 } else { -1 };
        let id = nodes.len();
        let children_reps: Vec<&MagnetizationState> = current.iter().map(|&c| nodes[c].representative.as_ref().unwrap()).collect();
        let representative = mean_state(&children_reps);
        for &c in &current {
            nodes[c].parent = Some(id);
        }
        nodes.push(TreeNode {
            id,
            age,
            sample: None,
            parent: None,
            children: current.clone(),
            members: (0..n_samples).collect(),
            representative: Some(representative),
            unsettled: false,
            synthetic: true,
        });
        layers.push(Layer { age, nodes: vec![id] });
        id
    };

    let tree = MergeTree {
        variant: config.tap.variant,
        eps: config.eps,
        nodes,
        root,
        leaves: leaf_ids,
        layers,
        records,
        leaf_names: data.labels().map(|l| l.to_vec()),
    };
    tree.validate()?;
    Ok(tree)
}

/// Pretty JSON of the whole tree including node representatives.
pub fn export_tree_json(tree: &MergeTree) -> Result<String> {
    Ok(serde_json::to_string_pretty(tree)?)
}

/// Parses a tree written by [`export_tree_json`], rejecting unknown fields and
/// structurally invalid trees.
pub fn parse_tree_json(text: &str) -> Result<MergeTree> {
    let tree: MergeTree = serde_json::from_str(text)?;
    tree.validate()?;
    Ok(tree)
}

/// `layers.csv`: per processed age of `tree`, the fixed-point counts of the TAP and
/// naive mean-field trees among `tree` and `other` (empty when absent).
pub fn layers_csv(tree: &MergeTree, other: Option<&MergeTree>) -> String {
    let pick = |v: Variant| [Some(tree), other].into_iter().flatten().find(|t| t.variant == v);
    let count = |t: Option<&MergeTree>, age: u64| {
        t.and_then(|t| t.records.iter().find(|r| r.age == age))
            .map(|r| r.n_fixed_points.to_string())
            .unwrap_or_default()
    };
    let (tap, nmf) = (pick(Variant::Tap), pick(Variant::Nmf));
    let mut out = String::from("age,n_fixed_points_tap,n_fixed_points_nmf,materialized\n");
    for r in &tree.records {
        out.push_str(&format!("{},{},{},{}\n", r.age, count(tap, r.age), count(nmf, r.age), r.materialized));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CheckpointSeries, PottsRBM};

    fn result(f: Vec<f64>, m: Vec<f64>, converged: bool) -> FixedPointResult {
        FixedPointResult {
            state: MagnetizationState { f, m, origin: Origin::Unknown },
            converged,
            iters: 1,
        }
    }

    #[test]
    fn identical_states_form_one_cluster() {
        let r: Vec<_> = (0..4).map(|_| result(vec![0.5, 0.5], vec![0.3], true)).collect();
        let set = cluster_fixed_points(7, &r, 1.0).unwrap();
        assert_eq!(set.cluster_ids, vec![0; 4]);
        assert_eq!(set.n_clusters(), 1);
    }

    #[test]
    fn representatives_are_means() {
        let mut r: Vec<_> = (0..3).map(|_| result(vec![1.0, 0.0], vec![0.9], true)).collect();
        r.extend((0..2).map(|_| result(vec![0.0, 1.0], vec![0.1], true)));
        r.swap(1, 3);
        let set = cluster_fixed_points(0, &r, 1.0).unwrap();
        assert_eq!(set.cluster_ids, vec![0, 1, 0, 0, 1]);
        assert_eq!(set.representatives[0].f, vec![1.0, 0.0]);
        assert_eq!(set.representatives[1].m, vec![0.1]);
        assert_eq!(set.representatives[1].origin, Origin::FixedPoint(1));
    }

    #[test]
    fn nonconverged_states_join_or_stand_alone() {
        let r = vec![
            result(vec![1.0, 0.0], vec![0.9], true),
            result(vec![0.9, 0.1], vec![0.8], false),
            result(vec![0.0, 1.0], vec![0.0], false),
        ];
        let set = cluster_fixed_points(0, &r, 0.5).unwrap();
        assert_eq!(set.cluster_ids, vec![0, 0, 1]);
        assert_eq!(set.unsettled, vec![false, true]);
        assert!(cluster_fixed_points(0, &[], 1.0).is_err());
    }

    fn star_tree(m: usize) -> MergeTree {
        let data = OneHotDataset::from_rows(2, &(0..m).map(|k| vec![k % 2, (k / 2) % 2]).collect::<Vec<_>>()).unwrap();
        let series = CheckpointSeries::from_entries(vec![(10, PottsRBM::zeros(2, 2, 3))]).unwrap();
        build_tree(&series, &data, &TreeConfig::default()).unwrap()
    }

    #[test]
    fn zero_model_gives_star_tree() {
        let tree = star_tree(4);
        assert_eq!(tree.nodes.len(), 5);
        assert_eq!(tree.nodes[tree.root].children, vec![0, 1, 2, 3]);
        assert_eq!(tree.layers.len(), 1);
        let newick = export_newick(&tree);
        assert_eq!(newick, "(0:0.001,1:0.001,2:0.001,3:0.001)root;\n");
        let parsed = parse_tree_json(&export_tree_json(&tree).unwrap()).unwrap();
        assert_eq!(parsed, tree);
    }

    #[test]
    fn validator_catches_broken_trees() {
        let tree = star_tree(3);
        let mut t = tree.clone();
        t.nodes[0].age = t.nodes[t.root].age;
        assert!(t.validate().is_err());
        let mut t = tree.clone();
        t.nodes[t.root].members.pop();
        assert!(t.validate().is_err());
        let mut t = tree;
        t.nodes[1].parent = None;
        assert!(t.validate().is_err());
    }

    #[test]
    fn age_filter_and_shape_errors() {
        let data = OneHotDataset::from_rows(2, &[vec![0, 1]]).unwrap();
        let series = CheckpointSeries::from_entries(vec![(10, PottsRBM::zeros(2, 2, 1))]).unwrap();
        let cfg = TreeConfig { max_age: Some(5), ..TreeConfig::default() };
        assert!(build_tree(&series, &data, &cfg).is_err());
        let wrong = OneHotDataset::from_rows(2, &[vec![0, 1, 1]]).unwrap();
        assert!(build_tree(&series, &wrong, &TreeConfig::default()).is_err());
    }
}
