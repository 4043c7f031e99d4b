//! Score-based hill climbing over DAGs with a Gaussian BIC.
//!
//! The score decomposes over nodes, so every move (add, remove, reverse an
//! edge) changes at most two local terms. The change from toggling `j` in the
//! parent set of `i` is cached per pair and refreshed only for the target
//! columns a move touches.

use std::collections::BTreeSet;

use super::{Learner, LearnerError, DEFAULT_MAX_ITERS, DEFAULT_MAX_PARENTS};
use crate::dataset::MultiRegimeDataset;
use crate::graph::MixedGraph;
use crate::scalar::Scalar;

const MIN_IMPROVEMENT: f64 = 1e-9;
const PIVOT_TOLERANCE: f64 = 1e-10;

/// Greedy BIC search on the observational block. Returns a DAG.
#[derive(Clone, Copy, Debug)]
pub struct GreedyBic {
    pub max_iters: usize,
    /// Multiplier on the `log(n) / 2` per-parameter penalty.
    pub penalty: f64,
    pub max_parents: usize,
}

impl Default for GreedyBic {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            penalty: 1.0,
            max_parents: DEFAULT_MAX_PARENTS,
        }
    }
}

/// Result of a search with its score after every accepted move.
#[derive(Clone, Debug)]
pub struct GreedyBicFit {
    pub graph: MixedGraph,
    pub scores: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
enum Move {
    Add(usize, usize),
    Remove(usize, usize),
    Reverse(usize, usize),
}

struct Scorer {
    cov: Vec<Vec<f64>>,
    n: f64,
    per_parent: f64,
}

impl Scorer {
    fn new<T: Scalar>(data: &MultiRegimeDataset<T>, penalty: f64) -> Result<Self, LearnerError> {
        let x = data.observational();
        let (n, p) = x.dim();
        if p < 2 {
            return Err(LearnerError::TooFewVariables);
        }
        if n < 3 {
            return Err(LearnerError::TooFewRows { min: 3, found: n });
        }
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let col: Vec<f64> = x.column(j).iter().map(|v| v.f64()).collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                col.into_iter().map(|v| v - mean).collect()
            })
            .collect();
        let mut cov = vec![vec![0.0; p]; p];
        for a in 0..p {
            for b in a..p {
                let s = cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum::<f64>() / n as f64;
                cov[a][b] = s;
                cov[b][a] = s;
            }
        }
        let n = n as f64;
        Ok(Self {
            cov,
            n,
            per_parent: penalty * n.ln() / 2.0,
        })
    }

    /// Local score of `node` given `parents`, or `None` when the regression is
    /// singular.
    fn local(&self, node: usize, parents: &BTreeSet<usize>) -> Option<f64> {
        let rss = self.residual_variance(node, parents)?;
        // A node that its parents determine exactly counts as a singular fit.
        if !(rss > PIVOT_TOLERANCE * self.cov[node][node]) || !rss.is_finite() {
            return None;
        }
        Some(-0.5 * self.n * rss.ln() - self.per_parent * parents.len() as f64)
    }

    fn residual_variance(&self, node: usize, parents: &BTreeSet<usize>) -> Option<f64> {
        let s = &self.cov;
        let pa: Vec<usize> = parents.iter().copied().collect();
        let k = pa.len();
        if k == 0 {
            return Some(s[node][node]);
        }
        // Cholesky of S_PP, then rss = S_ii - |L^{-1} S_Pi|^2.
        let mut l = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..=a {
                let mut v = s[pa[a]][pa[b]];
                for c in 0..b {
                    v -= l[a * k + c] * l[b * k + c];
                }
                if a == b {
                    let scale = s[pa[a]][pa[a]].abs().max(f64::MIN_POSITIVE);
                    if v <= PIVOT_TOLERANCE * scale {
                        return None;
                    }
                    l[a * k + a] = v.sqrt();
                } else {
                    l[a * k + b] = v / l[b * k + b];
                }
            }
        }
        let mut z = vec![0.0; k];
        for a in 0..k {
            let mut v = s[pa[a]][node];
            for c in 0..a {
                v -= l[a * k + c] * z[c];
            }
            z[a] = v / l[a * k + a];
        }
        Some(s[node][node] - z.iter().map(|v| v * v).sum::<f64>())
    }
}

struct Search<'a> {
    scorer: &'a Scorer,
    p: usize,
    max_parents: usize,
    parents: Vec<BTreeSet<usize>>,
    local: Vec<f64>,
    /// `toggle[j][i]`: score change from adding or removing `j -> i`.
    toggle: Vec<Vec<Option<f64>>>,
}

impl<'a> Search<'a> {
    fn new(scorer: &'a Scorer, max_parents: usize) -> Result<Self, LearnerError> {
        let p = scorer.cov.len();
        let parents = vec![BTreeSet::new(); p];
        let local = (0..p)
            .map(|i| scorer.local(i, &parents[i]))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| LearnerError::Failed("a variable has zero observational variance".into()))?;
        let mut s = Self {
            scorer,
            p,
            max_parents,
            parents,
            local,
            toggle: vec![vec![None; p]; p],
        };
        for i in 0..p {
            s.refresh(i);
        }
        Ok(s)
    }

    fn total(&self) -> f64 {
        self.local.iter().sum()
    }

    fn refresh(&mut self, target: usize) {
        for j in 0..self.p {
            if j == target {
                continue;
            }
            let mut pa = self.parents[target].clone();
            if !pa.remove(&j) {
                if pa.len() >= self.max_parents {
                    self.toggle[j][target] = None;
                    continue;
                }
                pa.insert(j);
            }
            self.toggle[j][target] = self.scorer.local(target, &pa).map(|s| s - self.local[target]);
        }
    }

    fn reachability(&self) -> Vec<Vec<bool>> {
        let mut children = vec![Vec::new(); self.p];
        for (i, pa) in self.parents.iter().enumerate() {
            for &j in pa {
                children[j].push(i);
            }
        }
        (0..self.p)
            .map(|start| {
                let mut seen = vec![false; self.p];
                let mut stack = vec![start];
                seen[start] = true;
                while let Some(v) = stack.pop() {
                    for &c in &children[v] {
                        if !seen[c] {
                            seen[c] = true;
                            stack.push(c);
                        }
                    }
                }
                seen
            })
            .collect()
    }

    /// Best improving move; candidates are scanned in a fixed order and only a
    /// strictly larger gain replaces the incumbent.
    fn best_move(&self) -> Option<(Move, f64)> {
        let reach = self.reachability();
        let mut best: Option<(Move, f64)> = None;
        let mut consider = |m: Move, gain: f64| {
            if gain > MIN_IMPROVEMENT && best.is_none_or(|(_, g)| gain > g) {
                best = Some((m, gain));
            }
        };
        for i in 0..self.p {
            for j in 0..self.p {
                if i == j {
                    continue;
                }
                let Some(delta) = self.toggle[j][i] else { continue };
                if self.parents[i].contains(&j) {
                    consider(Move::Remove(j, i), delta);
                    if let Some(back) = self.toggle[i][j] {
                        let other_path = self.parents.iter().enumerate().any(|(c, pa)| {
                            c != i && pa.contains(&j) && reach[c][i]
                        });
                        if !other_path {
                            consider(Move::Reverse(j, i), delta + back);
                        }
                    }
                } else if !self.parents[j].contains(&i) && !reach[i][j] {
                    consider(Move::Add(j, i), delta);
                }
            }
        }
        best
    }

    fn apply(&mut self, m: Move) {
        let touched: &[usize] = match m {
            Move::Add(j, i) => {
                self.parents[i].insert(j);
                &[i]
            }
            Move::Remove(j, i) => {
                self.parents[i].remove(&j);
                &[i]
            }
            Move::Reverse(j, i) => {
                self.parents[i].remove(&j);
                self.parents[j].insert(i);
                &[i, j]
            }
        };
        let touched = touched.to_vec();
        for &t in &touched {
            self.local[t] = self
                .scorer
                .local(t, &self.parents[t])
                .expect("accepted moves have finite scores");
        }
        for &t in &touched {
            self.refresh(t);
        }
    }

    fn graph(&self) -> MixedGraph {
        let edges = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(i, pa)| pa.iter().map(move |&j| (j, i)));
        MixedGraph::new(self.p, edges, []).expect("search keeps a simple graph")
    }
}

impl GreedyBic {
    /// Runs the search and keeps the score trajectory.
    pub fn search<T: Scalar>(&self, data: &MultiRegimeDataset<T>) -> Result<GreedyBicFit, LearnerError> {
        let scorer = Scorer::new(data, self.penalty)?;
        let mut search = Search::new(&scorer, self.max_parents)?;
        let mut scores = vec![search.total()];
        let mut iterations = 0;
        while iterations < self.max_iters {
            let Some((m, _)) = search.best_move() else { break };
            search.apply(m);
            scores.push(search.total());
            iterations += 1;
        }
        Ok(GreedyBicFit {
            graph: search.graph(),
            scores,
            iterations,
        })
    }
}

impl<T: Scalar> Learner<T> for GreedyBic {
    fn id(&self) -> String {
        "greedy-bic".into()
    }

    fn fit(&self, data: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError> {
        Ok(self.search(data)?.graph)
    }
}
