//! Discrete structural causal models with one latent per bidirected edge,
//! and exact enumeration of their (interventional) distributions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::OracleError;
use crate::graph::SemiMarkovGraph;
use crate::vset::VertexSet;

/// A latent confounder feeding exactly the two ends of a bidirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub ends: (usize, usize),
    pub prior: Vec<f64>,
}

/// `P(v | observed parents, incident latents)`. Rows are indexed by the
/// parents' values (in `parents` order, first fastest) followed by the
/// latents' values; each row holds a distribution over `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub parents: Vec<usize>,
    pub latents: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    pub graph: SemiMarkovGraph,
    /// Indexed by vertex id; entries of ids outside the graph are unused.
    pub arities: Vec<usize>,
    pub latents: Vec<Latent>,
    /// Indexed by vertex id; `None` for ids outside the graph.
    pub cpts: Vec<Option<Cpt>>,
}

/// A probability table over `vars` (first variable fastest), produced under
/// the intervention `do_assign`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistTable {
    pub vars: Vec<usize>,
    pub arities: Vec<usize>,
    pub probs: Vec<f64>,
    pub do_assign: Vec<(usize, usize)>,
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// A model inducing `g` with uniform-Dirichlet CPT rows and latent priors,
/// fully determined by `seed`.
pub fn random_scm(g: &SemiMarkovGraph, seed: u64, arity: usize, latent_arity: usize) -> Result<DiscreteScm, OracleError> {
    if arity < 2 || latent_arity < 2 {
        return Err(OracleError::Arity);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.universe_size();
    let arities = vec![arity; n];
    let latents: Vec<Latent> = g
        .bidirected_edges()
        .into_iter()
        .map(|ends| Latent { ends, prior: dirichlet(&mut rng, latent_arity) })
        .collect();
    let mut cpts = vec![None; n];
    for v in g.order().sorted(g.vertices()) {
        let parents: Vec<usize> = g.parents_of(v).iter().collect();
        let lat: Vec<usize> =
            (0..latents.len()).filter(|&l| latents[l].ends.0 == v || latents[l].ends.1 == v).collect();
        let n_rows = parents.iter().map(|&p| arities[p]).product::<usize>()
            * lat.iter().map(|&l| latents[l].prior.len()).product::<usize>();
        let rows = (0..n_rows).map(|_| dirichlet(&mut rng, arities[v])).collect();
        cpts[v] = Some(Cpt { parents, latents: lat, rows });
    }
    Ok(DiscreteScm { graph: g.clone(), arities, latents, cpts })
}

impl DiscreteScm {
    /// Observed vertices in id order.
    pub fn observed(&self) -> Vec<usize> {
        self.graph.vertices().iter().collect()
    }

    fn row(&self, v: usize, values: &[usize], latent_values: &[usize]) -> &[f64] {
        let cpt = self.cpts[v].as_ref().expect("observed vertex has a table");
        let mut idx = 0;
        let mut stride = 1;
        for &p in &cpt.parents {
            idx += values[p] * stride;
            stride *= self.arities[p];
        }
        for &l in &cpt.latents {
            idx += latent_values[l] * stride;
            stride *= self.latents[l].prior.len();
        }
        &cpt.rows[idx]
    }

    /// The joint over all observed vertices in the submodel where each
    /// `(v, value)` of `do_assign` is forced to `value`.
    pub fn interventional(&self, do_assign: &[(usize, usize)]) -> Result<DistTable, OracleError> {
        let vars = self.observed();
        let mut forced = vec![None; self.arities.len()];
        for &(v, val) in do_assign {
            if !self.graph.vertices().contains(v) || val >= self.arities[v] {
                return Err(OracleError::OutOfRange);
            }
            forced[v] = Some(val);
        }
        let arities: Vec<usize> = vars.iter().map(|&v| self.arities[v]).collect();
        let size: usize = arities.iter().product();
        let mut probs = vec![0.0; size];
        let lat_arities: Vec<usize> = self.latents.iter().map(|l| l.prior.len()).collect();
        let mut lat = vec![0usize; self.latents.len()];
        let mut values = vec![0usize; self.arities.len()];
        loop {
            let w: f64 = lat.iter().enumerate().map(|(l, &u)| self.latents[l].prior[u]).product();
            for (idx, slot) in probs.iter_mut().enumerate() {
                let mut rest = idx;
                for (k, &v) in vars.iter().enumerate() {
                    values[v] = rest % arities[k];
                    rest /= arities[k];
                }
                let mut p = w;
                for &v in &vars {
                    p *= match forced[v] {
                        Some(val) => f64::from(u8::from(values[v] == val)),
                        None => self.row(v, &values, &lat)[values[v]],
                    };
                    if p == 0.0 {
                        break;
                    }
                }
                *slot += p;
            }
            if !advance(&mut lat, &lat_arities) {
                break;
            }
        }
        Ok(DistTable { vars, arities, probs, do_assign: do_assign.to_vec() })
    }
}

/// Mixed-radix increment; false after the last assignment.
pub(crate) fn advance(values: &mut [usize], arities: &[usize]) -> bool {
    for (v, &a) in values.iter_mut().zip(arities) {
        *v += 1;
        if *v < a {
            return true;
        }
        *v = 0;
    }
    false
}

impl DistTable {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn position(&self, v: usize) -> Option<usize> {
        self.vars.iter().position(|&u| u == v)
    }

    /// Marginal over `keep` (given as a vertex set, kept in this table's
    /// variable order).
    pub fn marginal(&self, keep: VertexSet) -> DistTable {
        let kept: Vec<usize> = self.vars.iter().copied().filter(|&v| keep.contains(v)).collect();
        let kept_ar: Vec<usize> = kept.iter().map(|&v| self.arities[self.position(v).expect("own var")]).collect();
        let mut probs = vec![0.0; kept_ar.iter().product()];
        let map: Vec<Option<usize>> = self.vars.iter().map(|v| kept.iter().position(|k| k == v)).collect();
        let mut strides = vec![0usize; kept.len()];
        let mut s = 1;
        for (i, &a) in kept_ar.iter().enumerate() {
            strides[i] = s;
            s *= a;
        }
        for (idx, &p) in self.probs.iter().enumerate() {
            let mut rest = idx;
            let mut target = 0;
            for (k, &a) in self.arities.iter().enumerate() {
                let val = rest % a;
                rest /= a;
                if let Some(j) = map[k] {
                    target += val * strides[j];
                }
            }
            probs[target] += p;
        }
        DistTable { vars: kept, arities: kept_ar, probs, do_assign: self.do_assign.clone() }
    }

    /// The entry for `assign` (indexed by vertex id).
    pub fn get(&self, assign: &[usize]) -> f64 {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &v) in self.vars.iter().enumerate() {
            idx += assign[v] * stride;
            stride *= self.arities[k];
        }
        self.probs[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_is_forced() {
        let g = SemiMarkovGraph::parse("x -> z, z -> y, x <-> z").unwrap();
        let m = random_scm(&g, 0, 2, 2).unwrap();
        assert_eq!(m.latents.len(), 1);
        let x = g.id("x").unwrap();
        let z = g.id("z").unwrap();
        let y = g.id("y").unwrap();
        assert_eq!(m.cpts[x].as_ref().unwrap().rows.len(), 2);
        assert_eq!(m.cpts[z].as_ref().unwrap().rows.len(), 4);
        assert_eq!(m.cpts[y].as_ref().unwrap().rows.len(), 2);
        for cpt in m.cpts.iter().flatten() {
            for row in &cpt.rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let other = random_scm(&g, 1, 2, 2).unwrap();
        assert_ne!(m.cpts, other.cpts);
        assert_eq!(m, random_scm(&g, 0, 2, 2).unwrap());
    }

    #[test]
    fn joint_and_marginals() {
        let g = SemiMarkovGraph::parse("a -> b, b -> c, a <-> c").unwrap();
        let m = random_scm(&g, 7, 3, 2).unwrap();
        let joint = m.interventional(&[]).unwrap();
        assert!((joint.total() - 1.0).abs() < 1e-12);
        let ab = joint.marginal(g.set_of(&["a", "b"]).unwrap());
        assert_eq!(ab.probs.len(), 9);
        assert!((ab.total() - 1.0).abs() < 1e-12);
        let b = g.id("b").unwrap();
        let forced = m.interventional(&[(b, 2)]).unwrap().marginal(VertexSet::singleton(b));
        assert!((forced.probs[2] - 1.0).abs() < 1e-12);
        assert!(m.interventional(&[(b, 3)]).is_err());
    }

    #[test]
    fn point_mass_model() {
        let g = SemiMarkovGraph::parse("a -> b").unwrap();
        let mut m = random_scm(&g, 0, 2, 2).unwrap();
        for cpt in m.cpts.iter_mut().flatten() {
            for (i, row) in cpt.rows.iter_mut().enumerate() {
                *row = vec![0.0, 0.0];
                row[i % 2] = 1.0;
            }
        }
        let joint = m.interventional(&[]).unwrap();
        assert_eq!(joint.probs.iter().filter(|&&p| p == 1.0).count(), 1);
    }
}
