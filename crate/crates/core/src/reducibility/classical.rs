//! Communicating classes of a classical chain.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::evolution::check_stochastic;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalClasses {
    /// Each class sorted; classes ordered by their smallest state.
    pub classes: Vec<Vec<usize>>,
    /// No transition leaves the class.
    pub closed: Vec<bool>,
    pub irreducible: bool,
}

/// Strongly connected components of `{(i, j) : P(i, j) > tol}`.
pub fn classical_classes(p: &DMatrix<f64>, tol: f64) -> Result<ClassicalClasses, ModelError> {
    check_stochastic(p)?;
    let n = p.nrows();
    let mut g = DiGraph::<usize, ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > tol {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|comp| {
            let mut states: Vec<usize> = comp.into_iter().map(|ix| g[ix]).collect();
            states.sort_unstable();
            states
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    let mut class_of = vec![0; n];
    for (k, cls) in classes.iter().enumerate() {
        for &s in cls {
            class_of[s] = k;
        }
    }
    let closed = classes
        .iter()
        .enumerate()
        .map(|(k, cls)| cls.iter().all(|&i| (0..n).all(|j| p[(i, j)] <= tol || class_of[j] == k)))
        .collect();
    let irreducible = classes.len() == 1;
    Ok(ClassicalClasses { classes, closed, irreducible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identity_splits_into_singletons() {
        let r = classical_classes(&DMatrix::identity(4, 4), 1e-12).unwrap();
        assert_eq!(r.classes, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(r.closed.iter().all(|&c| c));
        assert!(!r.irreducible);
    }

    #[test]
    fn two_cycle_is_one_class() {
        let r = classical_classes(&fixtures::two_cycle(), 1e-12).unwrap();
        assert!(r.irreducible);
        assert_eq!(r.closed, vec![true]);
    }

    #[test]
    fn transient_class_feeds_closed_class() {
        let r = classical_classes(&fixtures::transient_into_closed(), 1e-12).unwrap();
        assert_eq!(r.classes, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(r.closed, vec![false, true]);
    }

    #[test]
    fn rejects_non_stochastic() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0]);
        assert!(matches!(classical_classes(&p, 1e-12), Err(ModelError::NotStochastic(_))));
    }
}
