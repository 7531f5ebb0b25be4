//! Synthetic retweet-like graphs.

use mtcrowd::graph::{EdgeList, NodeId};
use mtcrowd::rng;
use rand::Rng;

/// Directed preferential attachment. Nodes arrive one at a time; each new
/// node `v` receives about `mean_out_degree` in-edges `u -> v` from earlier
/// nodes, picked with probability proportional to `1 + out_degree(u)`. The
/// result is acyclic with a heavy-tailed out-degree, like a retweet cascade
/// where early accounts get retweeted most.
pub fn preferential_attachment(nodes: usize, mean_out_degree: f64, seed: u64) -> EdgeList {
    assert!(nodes >= 1);
    let mut r = rng::substream(seed, 0);
    let whole = mean_out_degree.floor() as usize;
    let frac = mean_out_degree - whole as f64;
    // every node once, plus once more per out-edge
    let mut urn: Vec<NodeId> = Vec::with_capacity(nodes + (nodes as f64 * mean_out_degree) as usize + 1);
    let mut edges = Vec::new();
    let mut picked = Vec::new();
    urn.push(0);
    for v in 1..nodes as NodeId {
        let links = (whole + r.random_bool(frac) as usize).min(v as usize);
        picked.clear();
        while picked.len() < links {
            let u = urn[r.random_range(0..urn.len())];
            if !picked.contains(&u) {
                picked.push(u);
            }
        }
        for &u in &picked {
            edges.push((u, v));
            urn.push(u);
        }
        urn.push(v);
    }
    EdgeList::new(nodes, &edges).expect("ids are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_shape() {
        let g = preferential_attachment(2000, 1.5, 3);
        assert_eq!(g.node_count(), 2000);
        let m = g.edge_count() as f64;
        assert!((m / 2000.0 - 1.5).abs() < 0.1, "{m}");
        assert!(g.iter().all(|(u, v)| u < v));
        let mut out = vec![0usize; 2000];
        g.iter().for_each(|(u, _)| out[u as usize] += 1);
        assert!(*out.iter().max().unwrap() > 30);
    }

    #[test]
    fn deterministic() {
        let a = preferential_attachment(500, 2.0, 9);
        assert_eq!(a, preferential_attachment(500, 2.0, 9));
        assert_ne!(a, preferential_attachment(500, 2.0, 10));
    }

    #[test]
    fn no_parallel_edges() {
        let g = preferential_attachment(300, 3.0, 1);
        let mut e: Vec<_> = g.iter().collect();
        let n = e.len();
        e.sort_unstable();
        e.dedup();
        assert_eq!(e.len(), n);
    }
}
