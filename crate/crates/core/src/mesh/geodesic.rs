use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{point, MeshTopology};

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the smallest distance.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Multi-source shortest-path distances over the polygon edge graph with
/// Euclidean edge lengths. Vertices not reachable from any source get the
/// sum of all edge lengths.
pub fn geodesic_distances(
    topology: &MeshTopology,
    positions: &[f64],
    sources: &[usize],
) -> Vec<f64> {
    let n = topology.num_vertices();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut total = 0.0;
    for &(a, b) in topology.edges() {
        let len = (point(positions, a) - point(positions, b)).norm();
        total += len;
        adj[a].push((b, len));
        adj[b].push((a, len));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    for d in &mut dist {
        if d.is_infinite() {
            *d = total;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_util::unit_cube;

    #[test]
    fn cube_opposite_corner() {
        let (topo, pos) = unit_cube();
        let d = geodesic_distances(&topo, &pos, &[0]);
        assert!((d[7] - 3.0).abs() < 1e-12);
        assert!((d[3] - 2.0).abs() < 1e-12);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn all_sources_zero() {
        let (topo, pos) = unit_cube();
        let all: Vec<usize> = (0..8).collect();
        assert!(geodesic_distances(&topo, &pos, &all)
            .iter()
            .all(|&d| d == 0.0));
    }

    #[test]
    fn unreachable_gets_sentinel() {
        let topo = MeshTopology::new(6, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let pos = vec![
            0., 0., 0., 1., 0., 0., 0., 1., 0., 5., 0., 0., 6., 0., 0., 5., 1., 0.,
        ];
        let d = geodesic_distances(&topo, &pos, &[0]);
        let total = 2.0 * (2.0 + 2f64.sqrt());
        assert!((d[4] - total).abs() < 1e-12);
        assert!(d.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn triangle_inequality_along_edges() {
        let (topo, pos) = unit_cube();
        let d = geodesic_distances(&topo, &pos, &[2, 5]);
        for &(a, b) in topo.edges() {
            let len = (point(&pos, a) - point(&pos, b)).norm();
            assert!(d[a] <= d[b] + len + 1e-12 && d[b] <= d[a] + len + 1e-12);
        }
    }
}
