use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Geometry;
use crate::error::Result;
use crate::grid::ScalarField;

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.dist.total_cmp(&self.dist).then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Geometry {
    /// Length of the lattice move from `a` by `(dx, dy)` cells, measured with
    /// the metric averaged over the two endpoints.
    pub(crate) fn move_length(&self, a: usize, dx: isize, dy: isize) -> f64 {
        let b = self.grid().offset(a, dx, dy);
        0.5 * (self.length_scale(a) + self.length_scale(b)) * self.coordinate_length(dx, dy)
    }

    /// `√a` at a node: metric length per unit coordinate length.
    fn length_scale(&self, node: usize) -> f64 {
        match self {
            Geometry::Circle1D { phi } => phi.values()[node],
            Geometry::ConformalTorus2D { w } => w.values()[node].exp(),
            Geometry::RoundSphere { .. } => 0.0,
        }
    }

    fn coordinate_length(&self, dx: isize, dy: isize) -> f64 {
        let grid = self.grid();
        if grid.dim() == 0 {
            return 0.0;
        }
        let ex = dx as f64 * grid.h(0);
        let ey = if grid.dim() == 2 { dy as f64 * grid.h(1) } else { 0.0 };
        (ex * ex + ey * ey).sqrt()
    }

    /// Length of the straight move from `a` by `(dx, dy)` cells, with the
    /// metric scale averaged (trapezoid rule) over the nodes nearest the
    /// segment. Agrees with [`Self::move_length`] for unit moves.
    pub(crate) fn segment_length(&self, a: usize, dx: isize, dy: isize) -> f64 {
        let m = dx.unsigned_abs().max(dy.unsigned_abs());
        if m <= 1 {
            return self.move_length(a, dx, dy);
        }
        let grid = self.grid();
        let mut acc = 0.0;
        for s in 0..=m {
            let f = s as f64 / m as f64;
            let node = grid.offset(a, (f * dx as f64).round() as isize, (f * dy as f64).round() as isize);
            let w = if s == 0 || s == m { 0.5 } else { 1.0 };
            acc += w * self.length_scale(node);
        }
        acc / m as f64 * self.coordinate_length(dx, dy)
    }

    /// Graph shortest-path distance from `source` over the 2-neighbour (1D)
    /// or 8-neighbour (2D) lattice, edges weighted by the current metric.
    pub fn geodesic_distance(&self, source: usize) -> Result<ScalarField> {
        self.require_grid("geodesic_distance")?;
        let grid = self.grid();
        let moves: &[(isize, isize)] = if grid.dim() == 1 {
            &[(1, 0), (-1, 0)]
        } else {
            &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
        };
        let mut dist = vec![f64::INFINITY; grid.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry { dist: 0.0, node: source });
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(dx, dy) in moves {
                let next = grid.offset(node, dx, dy);
                let cand = d + self.move_length(node, dx, dy);
                if cand < dist[next] {
                    dist[next] = cand;
                    heap.push(Entry { dist: cand, node: next });
                }
            }
        }
        Ok(ScalarField::from_raw(grid, dist))
    }
}
