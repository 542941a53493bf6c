//! Uniform lat/lon grid for radius and nearest-neighbour queries.
//!
//! Cells are square-ish boxes of at least `cell_m` meters on each side. The
//! longitude width is sized at the highest latitude the grid has seen, so a
//! cell is never narrower than `cell_m` anywhere in the indexed region.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::geo::{cell_of, meters_per_degree, LatLon};

/// Relative error allowed between approximate and exact distances.
pub const APPROX_SLACK: f64 = 0.01;

type Cell = (i64, i64);

#[derive(Debug, Clone, Copy)]
struct Layout {
    cell_m: f64,
    deg_lat: f64,
    deg_lon: f64,
}

impl Layout {
    fn new(cell_m: f64, max_abs_lat: f64) -> Self {
        let cell_m = if cell_m > 0.0 { cell_m } else { 1.0 };
        let lat = max_abs_lat.abs().min(89.0);
        let (m_lat, _) = meters_per_degree(0.0);
        let (_, m_lon) = meters_per_degree(lat);
        Layout { cell_m, deg_lat: cell_m / m_lat, deg_lon: cell_m / m_lon }
    }

    fn scaled(self, k: f64) -> Self {
        Layout { cell_m: self.cell_m * k, deg_lat: self.deg_lat * k, deg_lon: self.deg_lon * k }
    }

    fn cell(&self, p: LatLon) -> Cell {
        (cell_of(p.lat, self.deg_lat), cell_of(p.lon, self.deg_lon))
    }
}

/// Cell storage behind the shared query code.
trait Buckets {
    fn layout(&self) -> &Layout;
    /// Inclusive range of occupied cells, `None` when empty.
    fn bounds(&self) -> Option<(Cell, Cell)>;
    /// Ids in cells `(i, j0..=j1)`.
    fn visit_row<F: FnMut(u32)>(&self, i: i64, j0: i64, j1: i64, f: &mut F);
}

fn candidates<B: Buckets, F: FnMut(u32)>(b: &B, center: LatLon, radius_m: f64, mut f: F) {
    let Some((lo, hi)) = b.bounds() else { return };
    let layout = b.layout();
    let reach = libm::ceil((radius_m / layout.cell_m) * (1.0 + APPROX_SLACK)) as i64 + 1;
    let (ci, cj) = layout.cell(center);
    let (i0, i1) = ((ci - reach).max(lo.0), (ci + reach).min(hi.0));
    let (j0, j1) = ((cj - reach).max(lo.1), (cj + reach).min(hi.1));
    if i0 > i1 || j0 > j1 {
        return;
    }
    for i in i0..=i1 {
        b.visit_row(i, j0, j1, &mut f);
    }
}

fn visit_ring<B: Buckets, F: FnMut(u32)>(b: &B, (ci, cj): Cell, ring: i64, f: &mut F) {
    if ring == 0 {
        b.visit_row(ci, cj, cj, f);
        return;
    }
    b.visit_row(ci - ring, cj - ring, cj + ring, f);
    b.visit_row(ci + ring, cj - ring, cj + ring, f);
    for i in (ci - ring + 1)..=(ci + ring - 1) {
        b.visit_row(i, cj - ring, cj - ring, f);
        b.visit_row(i, cj + ring, cj + ring, f);
    }
}

fn nearest<B: Buckets>(
    b: &B,
    center: LatLon,
    mut approx: impl FnMut(u32) -> f64,
    mut exact: impl FnMut(u32) -> f64,
) -> Option<(u32, f64)> {
    let (lo, hi) = b.bounds()?;
    let layout = b.layout();
    let (ci, cj) = layout.cell(center);
    let max_ring = [ci - lo.0, hi.0 - ci, cj - lo.1, hi.1 - cj].into_iter().max().unwrap_or(0).max(0);

    let mut best: Option<(u32, f64)> = None;
    let mut ring = 0i64;
    loop {
        // exact >= approx / (1 + slack), so only near-minimal approximations
        // can win
        let mut ring_min = f64::INFINITY;
        visit_ring(b, (ci, cj), ring, &mut |id| ring_min = ring_min.min(approx(id)));
        let mut cutoff = ring_min * (1.0 + APPROX_SLACK) * (1.0 + APPROX_SLACK);
        if let Some((_, bd)) = best {
            cutoff = cutoff.min(bd * (1.0 + APPROX_SLACK));
        }
        visit_ring(b, (ci, cj), ring, &mut |id| {
            if approx(id) > cutoff {
                return;
            }
            let d = exact(id);
            best = match best {
                Some((bid, bd)) if bd < d || (bd == d && bid < id) => Some((bid, bd)),
                _ => Some((id, d)),
            };
        });
        // Anything in ring r+1 or beyond is at least r cells away.
        let lower = ring as f64 * layout.cell_m * (1.0 - APPROX_SLACK);
        if ring >= max_ring || best.is_some_and(|(_, bd)| lower > bd) {
            break;
        }
        ring += 1;
    }
    best
}

/// Mutable grid over ids at caller-supplied locations.
#[derive(Debug, Clone)]
pub struct GridIndex {
    layout: Layout,
    cells: BTreeMap<Cell, Vec<u32>>,
    len: usize,
    min_cell: Cell,
    max_cell: Cell,
}

impl Buckets for GridIndex {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn bounds(&self) -> Option<(Cell, Cell)> {
        (self.len > 0).then_some((self.min_cell, self.max_cell))
    }

    fn visit_row<F: FnMut(u32)>(&self, i: i64, j0: i64, j1: i64, f: &mut F) {
        for (_, ids) in self.cells.range((i, j0)..=(i, j1)) {
            ids.iter().for_each(|&id| f(id));
        }
    }
}

impl GridIndex {
    /// `max_abs_lat` bounds the latitudes that will be inserted.
    pub fn new(cell_m: f64, max_abs_lat: f64) -> Self {
        GridIndex {
            layout: Layout::new(cell_m, max_abs_lat),
            cells: BTreeMap::new(),
            len: 0,
            min_cell: (i64::MAX, i64::MAX),
            max_cell: (i64::MIN, i64::MIN),
        }
    }

    /// Sizes the grid for a set of points, with `margin_deg` of latitude headroom.
    pub fn for_points<I: IntoIterator<Item = LatLon>>(cell_m: f64, points: I, margin_deg: f64) -> Self {
        let max_abs = points.into_iter().map(|p| p.lat.abs()).fold(0.0_f64, f64::max);
        GridIndex::new(cell_m, max_abs + margin_deg)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.layout.cell_m
    }

    pub fn insert(&mut self, id: u32, p: LatLon) {
        let c = self.layout.cell(p);
        self.cells.entry(c).or_default().push(id);
        self.len += 1;
        self.min_cell = (self.min_cell.0.min(c.0), self.min_cell.1.min(c.1));
        self.max_cell = (self.max_cell.0.max(c.0), self.max_cell.1.max(c.1));
    }

    /// Removes `id` previously inserted at `p`. Returns whether it was found.
    pub fn remove(&mut self, id: u32, p: LatLon) -> bool {
        let c = self.layout.cell(p);
        let Some(bucket) = self.cells.get_mut(&c) else {
            return false;
        };
        let Some(pos) = bucket.iter().position(|&x| x == id) else {
            return false;
        };
        bucket.remove(pos);
        if bucket.is_empty() {
            self.cells.remove(&c);
        }
        self.len -= 1;
        true
    }

    /// Moves `id` from `from` to `to`, touching the buckets only when the cell changes.
    pub fn relocate(&mut self, id: u32, from: LatLon, to: LatLon) {
        if self.layout.cell(from) != self.layout.cell(to) {
            self.remove(id, from);
            self.insert(id, to);
        }
    }

    /// Calls `f` for every id in cells that may hold points within `radius_m`
    /// of `center`. Candidates are not distance-filtered.
    pub fn for_each_candidate(&self, center: LatLon, radius_m: f64, f: impl FnMut(u32)) {
        candidates(self, center, radius_m, f)
    }

    /// Exact nearest neighbour under a metric that dominates geodesic distance.
    ///
    /// `approx` must stay within [`APPROX_SLACK`] (relative) of `exact`, and
    /// `exact(id)` must be at least the geodesic distance from `center` to the
    /// indexed location of `id`. Ties go to the lowest id.
    pub fn nearest(
        &self,
        center: LatLon,
        approx: impl FnMut(u32) -> f64,
        exact: impl FnMut(u32) -> f64,
    ) -> Option<(u32, f64)> {
        nearest(self, center, approx, exact)
    }
}

/// Immutable grid over a fixed point set (ids are slice positions), stored
/// as a dense array of cell ranges.
#[derive(Debug, Clone)]
pub struct FrozenGrid {
    layout: Layout,
    lo: Cell,
    hi: Cell,
    cols: usize,
    starts: Vec<u32>,
    ids: Vec<u32>,
}

impl Buckets for FrozenGrid {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn bounds(&self) -> Option<(Cell, Cell)> {
        (!self.ids.is_empty()).then_some((self.lo, self.hi))
    }

    fn visit_row<F: FnMut(u32)>(&self, i: i64, j0: i64, j1: i64, f: &mut F) {
        if i < self.lo.0 || i > self.hi.0 {
            return;
        }
        let (j0, j1) = (j0.max(self.lo.1), j1.min(self.hi.1));
        if j0 > j1 {
            return;
        }
        let row = (i - self.lo.0) as usize * self.cols;
        let a = self.starts[row + (j0 - self.lo.1) as usize] as usize;
        let b = self.starts[row + (j1 - self.lo.1) as usize + 1] as usize;
        self.ids[a..b].iter().for_each(|&id| f(id));
    }
}

impl FrozenGrid {
    /// Cells are at least `cell_m` wide for queries up to `margin_deg` of
    /// latitude beyond the points; they grow when the points are spread so
    /// thinly that a dense array would be wasteful.
    pub fn new(cell_m: f64, points: &[LatLon], margin_deg: f64) -> Self {
        let max_abs = points.iter().map(|p| p.lat.abs()).fold(0.0_f64, f64::max);
        let mut layout = Layout::new(cell_m, max_abs + margin_deg);
        let budget = 4 * points.len() as i128 + 4096;
        let (lo, hi) = loop {
            let mut lo = (i64::MAX, i64::MAX);
            let mut hi = (i64::MIN, i64::MIN);
            for &p in points {
                let c = layout.cell(p);
                lo = (lo.0.min(c.0), lo.1.min(c.1));
                hi = (hi.0.max(c.0), hi.1.max(c.1));
            }
            if points.is_empty() {
                break ((0, 0), (0, 0));
            }
            let area = (hi.0 - lo.0 + 1) as i128 * (hi.1 - lo.1 + 1) as i128;
            if area <= budget {
                break (lo, hi);
            }
            layout = layout.scaled(2.0);
        };
        let cols = (hi.1 - lo.1 + 1) as usize;
        let rows = (hi.0 - lo.0 + 1) as usize;
        let slot = |c: Cell| (c.0 - lo.0) as usize * cols + (c.1 - lo.1) as usize;
        let mut starts = vec![0u32; rows * cols + 1];
        for &p in points {
            starts[slot(layout.cell(p)) + 1] += 1;
        }
        for k in 1..starts.len() {
            starts[k] += starts[k - 1];
        }
        let mut fill = starts.clone();
        let mut ids = vec![0u32; points.len()];
        for (id, &p) in points.iter().enumerate() {
            let s = &mut fill[slot(layout.cell(p))];
            ids[*s as usize] = id as u32;
            *s += 1;
        }
        FrozenGrid { layout, lo, hi, cols, starts, ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Effective cell size (meters).
    pub fn cell_size(&self) -> f64 {
        self.layout.cell_m
    }

    /// See [`GridIndex::for_each_candidate`].
    pub fn for_each_candidate(&self, center: LatLon, radius_m: f64, f: impl FnMut(u32)) {
        candidates(self, center, radius_m, f)
    }

    /// See [`GridIndex::nearest`].
    pub fn nearest(
        &self,
        center: LatLon,
        approx: impl FnMut(u32) -> f64,
        exact: impl FnMut(u32) -> f64,
    ) -> Option<(u32, f64)> {
        nearest(self, center, approx, exact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{approx_distance, vincenty_distance};

    fn brute_nearest(points: &[LatLon], q: LatLon) -> (u32, f64) {
        let mut best = (0u32, f64::INFINITY);
        for (i, &p) in points.iter().enumerate() {
            let d = vincenty_distance(q, p);
            if d < best.1 {
                best = (i as u32, d);
            }
        }
        best
    }

    #[test]
    fn nearest_matches_brute_force() {
        let origin = LatLon::new(25.28, 51.52).unwrap();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4000.0 - 2000.0
        };
        let pts: Vec<LatLon> = (0..300).map(|_| origin.offset(next(), next())).collect();
        let mut idx = GridIndex::for_points(60.0, pts.iter().copied(), 0.1);
        for (i, &p) in pts.iter().enumerate() {
            idx.insert(i as u32, p);
        }
        for _ in 0..200 {
            let q = origin.offset(next() * 2.0, next() * 2.0);
            let (id, d) = idx
                .nearest(q, |i| approx_distance(q, pts[i as usize]), |i| vincenty_distance(q, pts[i as usize]))
                .unwrap();
            let (bid, bd) = brute_nearest(&pts, q);
            assert_eq!(d, bd);
            assert_eq!(id, bid);
        }
    }

    #[test]
    fn candidates_cover_radius() {
        let origin = LatLon::new(-33.9, 18.4).unwrap();
        let pts: Vec<LatLon> = (0..50).map(|i| origin.offset(i as f64 * 13.0, (i % 7) as f64 * 9.0)).collect();
        let mut idx = GridIndex::for_points(25.0, pts.iter().copied(), 0.1);
        for (i, &p) in pts.iter().enumerate() {
            idx.insert(i as u32, p);
        }
        let q = origin.offset(300.0, 20.0);
        let mut got = Vec::new();
        idx.for_each_candidate(q, 40.0, |i| got.push(i));
        for (i, &p) in pts.iter().enumerate() {
            if vincenty_distance(q, p) <= 40.0 {
                assert!(got.contains(&(i as u32)));
            }
        }
    }

    #[test]
    fn remove_and_relocate() {
        let a = LatLon::new(10.0, 10.0).unwrap();
        let b = a.offset(500.0, 0.0);
        let mut idx = GridIndex::new(20.0, 11.0);
        idx.insert(7, a);
        idx.relocate(7, a, b);
        assert_eq!(idx.len(), 1);
        let (id, _) = idx.nearest(b, |_| 0.0, |_| 0.0).unwrap();
        assert_eq!(id, 7);
        assert!(!idx.remove(7, a));
        assert!(idx.remove(7, b));
        assert!(idx.is_empty());
        assert!(idx.nearest(b, |_| 0.0, |_| 0.0).is_none());
    }

    #[test]
    fn frozen_grid_matches_brute_force() {
        let origin = LatLon::new(47.0, 8.0).unwrap();
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 3000.0 - 1500.0
        };
        let pts: Vec<LatLon> = (0..400).map(|_| origin.offset(next(), next())).collect();
        let grid = FrozenGrid::new(45.0, &pts, 0.1);
        assert_eq!(grid.len(), 400);
        for _ in 0..200 {
            let q = origin.offset(next() * 1.5, next() * 1.5);
            let got =
                grid.nearest(q, |i| approx_distance(q, pts[i as usize]), |i| vincenty_distance(q, pts[i as usize]));
            assert_eq!(got, Some(brute_nearest(&pts, q)));
            let mut near = Vec::new();
            grid.for_each_candidate(q, 70.0, |i| near.push(i));
            for (i, &p) in pts.iter().enumerate() {
                if vincenty_distance(q, p) <= 70.0 {
                    assert!(near.contains(&(i as u32)));
                }
            }
        }
    }

    #[test]
    fn frozen_grid_coarsens_sparse_sets() {
        let pts =
            [LatLon::new(0.0, 0.0).unwrap(), LatLon::new(50.0, 100.0).unwrap(), LatLon::new(-40.0, -120.0).unwrap()];
        let grid = FrozenGrid::new(10.0, &pts, 0.0);
        assert!(grid.cell_size() > 10.0);
        let q = LatLon::new(49.0, 99.0).unwrap();
        let (id, _) = grid
            .nearest(q, |i| vincenty_distance(q, pts[i as usize]), |i| vincenty_distance(q, pts[i as usize]))
            .unwrap();
        assert_eq!(id, 1);
        assert!(FrozenGrid::new(10.0, &[], 0.0).nearest(q, |_| 0.0, |_| 0.0).is_none());
    }
}
