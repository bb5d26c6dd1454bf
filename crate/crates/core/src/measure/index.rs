//! Bounding-box kd-tree over weighted atoms.

use super::region::{dist2, Overlap, Region};

/// Maximum number of atoms stored in a leaf.
pub const LEAF_SIZE: usize = 32;

#[derive(Clone, Debug)]
struct Node {
    start: usize,
    end: usize,
    mass: f64,
    children: Option<(usize, usize)>,
}

/// Immutable hierarchical partition: each node stores the tight bounding box
/// and total weight of its atoms, so fully covered subtrees are summed in O(1).
#[derive(Clone, Debug)]
pub struct KdIndex {
    d: usize,
    nodes: Vec<Node>,
    /// Node bounding boxes, `2 * d` values per node (`lo` then `hi`).
    bounds: Vec<f64>,
    perm: Vec<usize>,
}

impl KdIndex {
    pub fn build(d: usize, coords: &[f64], weights: &[f64]) -> Self {
        let n = weights.len();
        let mut idx = KdIndex {
            d,
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            bounds: Vec::new(),
            perm: (0..n).collect(),
        };
        if n > 0 {
            idx.build_node(coords, weights, 0, n);
        }
        idx
    }

    fn build_node(&mut self, coords: &[f64], weights: &[f64], start: usize, end: usize) -> usize {
        let d = self.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.perm[start..end] {
            for k in 0..d {
                let x = coords[i * d + k];
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            mass: 0.0,
            children: None,
        });
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);

        if end - start <= LEAF_SIZE {
            self.nodes[id].mass = self.perm[start..end].iter().map(|&i| weights[i]).sum();
            return id;
        }
        let axis = (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * d + axis].total_cmp(&coords[b * d + axis])
        });
        let left = self.build_node(coords, weights, start, mid);
        let right = self.build_node(coords, weights, mid, end);
        self.nodes[id].mass = self.nodes[left].mass + self.nodes[right].mass;
        self.nodes[id].children = Some((left, right));
        id
    }

    fn node_box(&self, id: usize) -> (&[f64], &[f64]) {
        let b = &self.bounds[2 * self.d * id..2 * self.d * (id + 1)];
        b.split_at(self.d)
    }

    /// Total weight of atoms satisfying `region.contains`.
    pub fn mass<R: Region>(&self, region: &R, coords: &[f64], weights: &[f64]) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (lo, hi) = self.node_box(id);
            match region.classify(lo, hi) {
                Overlap::Outside => {}
                Overlap::Inside => total += self.nodes[id].mass,
                Overlap::Partial => match self.nodes[id].children {
                    Some((l, r)) => {
                        stack.push(r);
                        stack.push(l);
                    }
                    None => {
                        let node = &self.nodes[id];
                        for &i in &self.perm[node.start..node.end] {
                            if region.contains(&coords[i * self.d..(i + 1) * self.d]) {
                                total += weights[i];
                            }
                        }
                    }
                },
            }
        }
        total
    }

    /// Calls `f` on every atom index inside `region` (in tree order).
    pub fn for_each_in<R: Region>(&self, region: &R, coords: &[f64], mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (lo, hi) = self.node_box(id);
            let node = &self.nodes[id];
            match region.classify(lo, hi) {
                Overlap::Outside => {}
                Overlap::Inside => self.perm[node.start..node.end].iter().for_each(|&i| f(i)),
                Overlap::Partial => match node.children {
                    Some((l, r)) => {
                        stack.push(r);
                        stack.push(l);
                    }
                    None => {
                        for &i in &self.perm[node.start..node.end] {
                            if region.contains(&coords[i * self.d..(i + 1) * self.d]) {
                                f(i);
                            }
                        }
                    }
                },
            }
        }
    }

    /// Squared distance from `q` to the nearest atom at a strictly positive
    /// distance, restricted to atoms accepted by `keep`.
    pub fn nearest_positive_dist2(
        &self,
        q: &[f64],
        coords: &[f64],
        keep: impl Fn(usize) -> bool,
    ) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let (lo, hi) = self.node_box(id);
            let mut near = 0.0;
            for k in 0..self.d {
                let t = if q[k] < lo[k] {
                    lo[k] - q[k]
                } else if q[k] > hi[k] {
                    q[k] - hi[k]
                } else {
                    0.0
                };
                near += t * t;
            }
            if near >= best {
                continue;
            }
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.perm[node.start..node.end] {
                        if !keep(i) {
                            continue;
                        }
                        let d2 = dist2(q, &coords[i * self.d..(i + 1) * self.d]);
                        if d2 > 0.0 && d2 < best {
                            best = d2;
                        }
                    }
                }
            }
        }
        best
    }
}
