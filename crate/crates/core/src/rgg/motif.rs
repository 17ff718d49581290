//! Small connected graphs used as subgraph-count targets.

use super::RggError;

/// Largest motif order for which induced-subgraph counting is supported.
pub const MAX_MOTIF_VERTICES: usize = 8;

/// A connected unlabelled graph on `k` vertices, `2 <= k <= 8`, stored with a
/// canonical edge list and per-vertex adjacency bitmasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    k: usize,
    edges: Vec<(usize, usize)>,
    rows: [u8; MAX_MOTIF_VERTICES],
    degrees: Vec<usize>,
    degree_multiset: Vec<usize>,
}

impl Motif {
    /// Validates and canonicalizes an edge list: endpoints in `0..k`, no
    /// loops, no duplicates, and the graph must be connected.
    pub fn new(k: usize, edges: &[(usize, usize)]) -> Result<Self, RggError> {
        if k < 2 {
            return Err(RggError::InvalidParameter {
                reason: format!("motif needs at least 2 vertices, got {k}"),
            });
        }
        if k > MAX_MOTIF_VERTICES {
            return Err(RggError::MotifTooLarge {
                k,
                max: MAX_MOTIF_VERTICES,
            });
        }
        let mut rows = [0u8; MAX_MOTIF_VERTICES];
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(RggError::InvalidParameter {
                    reason: format!("edge ({a}, {b}) has an endpoint outside 0..{k}"),
                });
            }
            if a == b {
                return Err(RggError::InvalidParameter {
                    reason: format!("loop edge at vertex {a}"),
                });
            }
            let (u, v) = (a.min(b), a.max(b));
            if rows[u] >> v & 1 == 1 {
                return Err(RggError::InvalidParameter {
                    reason: format!("duplicate edge ({u}, {v})"),
                });
            }
            rows[u] |= 1 << v;
            rows[v] |= 1 << u;
            canon.push((u, v));
        }
        canon.sort_unstable();

        // Connectivity via bitmask flood fill from vertex 0.
        let mut reached: u8 = 1;
        loop {
            let mut grown = reached;
            for (v, &row) in rows.iter().enumerate().take(k) {
                if reached >> v & 1 == 1 {
                    grown |= row;
                }
            }
            if grown == reached {
                break;
            }
            reached = grown;
        }
        if reached.count_ones() as usize != k {
            return Err(RggError::DisconnectedMotif);
        }

        let degrees: Vec<usize> = (0..k).map(|v| rows[v].count_ones() as usize).collect();
        let mut degree_multiset = degrees.clone();
        degree_multiset.sort_unstable();
        Ok(Motif {
            k,
            edges: canon,
            rows,
            degrees,
            degree_multiset,
        })
    }

    /// Single edge on two vertices.
    pub fn k2() -> Self {
        Self::new(2, &[(0, 1)]).expect("static motif")
    }

    /// Path on three vertices.
    pub fn path3() -> Self {
        Self::new(3, &[(0, 1), (1, 2)]).expect("static motif")
    }

    /// Triangle.
    pub fn triangle() -> Self {
        Self::new(3, &[(0, 1), (0, 2), (1, 2)]).expect("static motif")
    }

    /// Star on `k` vertices: one centre joined to `k - 1` leaves.
    pub fn star(k: usize) -> Result<Self, RggError> {
        let edges: Vec<(usize, usize)> = (1..k).map(|v| (0, v)).collect();
        Self::new(k, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.k
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical sorted edge list with `u < v` per edge.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.k && v < self.k && self.rows[u] >> v & 1 == 1
    }

    /// Whether the labelled graph given by adjacency bitmask rows (one row per
    /// vertex, bit `j` of row `i` set iff `i ~ j`) is isomorphic to this
    /// motif. `rows.len()` must equal the motif order for a match.
    pub fn matches_adjacency(&self, rows: &[u8]) -> bool {
        let k = self.k;
        if rows.len() != k {
            return false;
        }
        let cand_degrees: Vec<usize> = rows.iter().map(|r| r.count_ones() as usize).collect();
        let mut cand_sorted = cand_degrees.clone();
        cand_sorted.sort_unstable();
        if cand_sorted != self.degree_multiset {
            return false;
        }
        // Backtracking vertex assignment: candidate vertex i -> motif vertex
        // perm[i], pruned by degree and by adjacency consistency with the
        // already-assigned prefix.
        let mut perm = [usize::MAX; MAX_MOTIF_VERTICES];
        let mut used: u8 = 0;
        self.assign(0, rows, &cand_degrees, &mut perm, &mut used)
    }

    fn assign(
        &self,
        i: usize,
        rows: &[u8],
        cand_degrees: &[usize],
        perm: &mut [usize; MAX_MOTIF_VERTICES],
        used: &mut u8,
    ) -> bool {
        if i == self.k {
            return true;
        }
        for target in 0..self.k {
            if *used >> target & 1 == 1 || self.degrees[target] != cand_degrees[i] {
                continue;
            }
            let consistent = (0..i).all(|j| {
                let cand_edge = rows[j] >> i & 1 == 1;
                let motif_edge = self.rows[perm[j]] >> target & 1 == 1;
                cand_edge == motif_edge
            });
            if !consistent {
                continue;
            }
            perm[i] = target;
            *used |= 1 << target;
            if self.assign(i + 1, rows, cand_degrees, perm, used) {
                return true;
            }
            *used &= !(1 << target);
            perm[i] = usize::MAX;
        }
        false
    }
}
