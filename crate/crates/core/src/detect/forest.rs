use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DetectError, DetectResult};
use crate::seed;

/// Random-forest hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features tried per split; `None` means `⌊√d⌋`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_features: None,
            bootstrap: true,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

/// Row-major feature matrix with boolean labels (`true` = ictal).
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub features: &'a [f64],
    pub labels: &'a [bool],
    pub dim: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn new(features: &'a [f64], labels: &'a [bool], dim: usize) -> DetectResult<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(DetectError::Dimension(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DetectError::Numerical("non-finite training feature".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
        })
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.dim + feature]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Goes left when `x[feature] <= threshold`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training rows reaching the leaf: `[inter-ictal, ictal]`.
    Leaf { counts: [u32; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { counts } => return *counts,
            }
        }
    }

    /// Majority class of the reached leaf; ties vote inter-ictal.
    pub fn votes_ictal(&self, x: &[f64]) -> bool {
        let c = self.leaf(x);
        c[1] > c[0]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Best {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity, `n_l·gini_l + n_r·gini_r`.
    score: f64,
}

struct Grower<'a, R> {
    data: TrainingSet<'a>,
    config: &'a ForestConfig,
    max_features: usize,
    rng: R,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

impl<R: Rng> Grower<'_, R> {
    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let ictal = rows.iter().filter(|&&r| self.data.labels[r]).count();
        [rows.len() - ictal, ictal]
    }

    /// Best threshold on one feature, or `None` when it is constant on `rows`
    /// or no split leaves `min_samples_leaf` on both sides.
    fn best_on(&mut self, rows: &[usize], feature: usize, total: [usize; 2]) -> Option<Best> {
        self.scratch.clear();
        self.scratch.extend(
            rows.iter()
                .map(|&r| (self.data.value(r, feature), self.data.labels[r])),
        );
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.scratch.len();
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut left = [0usize; 2];
        let mut best: Option<Best> = None;
        for i in 0..n - 1 {
            left[usize::from(self.scratch[i].1)] += 1;
            let (v, next) = (self.scratch[i].0, self.scratch[i + 1].0);
            if v == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = (i + 1) as f64 * gini(left) + (n - i - 1) as f64 * gini(right);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Best {
                    feature,
                    threshold: v,
                    score,
                });
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let total = self.counts(&rows);
        let leaf = Node::Leaf {
            counts: [total[0] as u32, total[1] as u32],
        };
        self.nodes.push(leaf);
        let pure = total[0] == 0 || total[1] == 0;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || rows.len() < 2 * self.config.min_samples_leaf.max(1) {
            return id;
        }

        // Features are visited in random order until `max_features`
        // non-constant ones have been scored; constant draws do not count.
        let mut order: Vec<usize> = (0..self.data.dim).collect();
        order.shuffle(&mut self.rng);
        let mut tried = 0;
        let mut best: Option<Best> = None;
        for f in order {
            if tried >= self.max_features {
                break;
            }
            if let Some(b) = self.best_on(&rows, f, total) {
                tried += 1;
                if best.as_ref().is_none_or(|cur| b.score < cur.score) {
                    best = Some(b);
                }
            }
        }
        let Some(best) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&row| self.data.value(row, best.feature) <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

impl RandomForest {
    /// Grows `config.trees` trees; tree `t` draws from its own stream seeded
    /// by `(config.seed, t)`, so the result does not depend on scheduling.
    pub fn fit(data: TrainingSet<'_>, config: &ForestConfig) -> DetectResult<Self> {
        let n = data.labels.len();
        let ictal = data.labels.iter().filter(|&&l| l).count();
        if ictal == 0 || ictal == n {
            return Err(DetectError::SingleClass);
        }
        if config.trees == 0 {
            return Err(DetectError::Config("forest needs at least one tree".into()));
        }
        let max_features = config
            .max_features
            .unwrap_or_else(|| (data.dim as f64).sqrt().floor() as usize)
            .clamp(1, data.dim);
        let trees = (0..config.trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(config.seed, t as u64));
                let rows: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    index::sample(&mut rng, n, n).into_vec()
                };
                let mut g = Grower {
                    data,
                    config,
                    max_features,
                    rng,
                    nodes: Vec::new(),
                    scratch: Vec::with_capacity(n),
                };
                g.grow(rows, 0);
                DecisionTree { nodes: g.nodes }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            dim: data.dim,
            trees,
        })
    }

    fn check(&self, x: &[f64]) -> DetectResult<()> {
        if x.len() != self.dim {
            return Err(DetectError::Dimension(format!(
                "feature vector has {} values, forest expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Fraction of trees voting ictal.
    pub fn predict_proba(&self, x: &[f64]) -> DetectResult<f64> {
        self.check(x)?;
        let votes = self.trees.iter().filter(|t| t.votes_ictal(x)).count();
        Ok(votes as f64 / self.trees.len() as f64)
    }

    /// Ictal iff strictly more than half of the trees say so.
    pub fn predict(&self, x: &[f64]) -> DetectResult<bool> {
        Ok(self.predict_proba(x)? > 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = seed::rng(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let ictal = i % 2 == 0;
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            // Separable along a + b with a margin.
            let shift = if ictal { 0.6 } else { -0.6 };
            x.extend([a + shift, b + shift]);
            y.push(ictal);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let (x, y) = toy(200, 1);
        let data = TrainingSet::new(&x, &y, 2).unwrap();
        let f = RandomForest::fit(data, &ForestConfig::default()).unwrap();
        for (row, &label) in x.chunks(2).zip(&y) {
            assert_eq!(f.predict(row).unwrap(), label);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = toy(120, 2);
        let data = TrainingSet::new(&x, &y, 2).unwrap();
        let cfg = ForestConfig {
            trees: 10,
            seed: 9,
            ..Default::default()
        };
        let a = serde_json::to_string(&RandomForest::fit(data, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&RandomForest::fit(data, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = ForestConfig { seed: 10, ..cfg };
        assert_ne!(
            a,
            serde_json::to_string(&RandomForest::fit(data, &other).unwrap()).unwrap()
        );
    }

    #[test]
    fn single_class_and_dimension_errors() {
        let x = [0.0, 1.0, 2.0];
        let y = [true; 3];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        assert!(matches!(
            RandomForest::fit(data, &ForestConfig::default()),
            Err(DetectError::SingleClass)
        ));
        assert!(TrainingSet::new(&x, &y[..2], 1).is_err());
        let y = [true, false, true];
        let f = RandomForest::fit(
            TrainingSet::new(&x, &y, 1).unwrap(),
            &ForestConfig::default(),
        )
        .unwrap();
        assert!(f.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn thresholds_are_observed_values() {
        let (x, y) = toy(150, 3);
        let data = TrainingSet::new(&x, &y, 2).unwrap();
        let f = RandomForest::fit(
            data,
            &ForestConfig {
                trees: 20,
                ..Default::default()
            },
        )
        .unwrap();
        for t in &f.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature, threshold, ..
                } = node
                {
                    assert!(x.chunks(2).any(|r| r[*feature] == *threshold));
                }
            }
        }
    }

    #[test]
    fn tie_votes_go_to_interictal() {
        let leaf = |ictal: bool| DecisionTree {
            nodes: vec![Node::Leaf {
                counts: if ictal { [0, 1] } else { [1, 0] },
            }],
        };
        let f = RandomForest {
            config: ForestConfig::default(),
            dim: 1,
            trees: vec![leaf(true), leaf(false), leaf(true), leaf(false)],
        };
        assert_eq!(f.predict_proba(&[0.0]).unwrap(), 0.5);
        assert!(!f.predict(&[0.0]).unwrap());
        let even = DecisionTree {
            nodes: vec![Node::Leaf { counts: [2, 2] }],
        };
        assert!(!even.votes_ictal(&[0.0]));
    }
}
