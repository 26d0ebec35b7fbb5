//! Centroid selection and neighborhood search: farthest point sampling,
//! ball query and kNN.
//!
//! All comparisons run on squared distances. Squaring is strictly monotone,
//! so ordering and ties are identical to plain Euclidean distances as long as
//! oracle and implementation stay on the same convention (they do).

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{GamError, Result};
use crate::types::{NeighborhoodIndex, PointCloud};

#[inline]
fn sq_dist(a: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    let dx = a[[i, 0]] - a[[j, 0]];
    let dy = a[[i, 1]] - a[[j, 1]];
    let dz = a[[i, 2]] - a[[j, 2]];
    dx * dx + dy * dy + dz * dz
}

/// Farthest point sampling.
///
/// The first center is `seed mod N`; every further center maximizes the
/// minimum distance to the already selected set, ties broken by lowest
/// index. Selected indices are distinct, so `n_s = N` yields a permutation
/// even when the cloud contains duplicate points.
pub fn farthest_point_sample(cloud: &PointCloud, n_s: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.n_points();
    if n_s > n {
        return Err(GamError::TooManyCenters {
            requested: n_s,
            available: n,
        });
    }
    if n_s == 0 {
        return Err(GamError::InvalidInput("n_s must be >= 1".into()));
    }
    let coords = cloud.coords();
    let first = (seed % n as u64) as usize;

    let mut selected = Vec::with_capacity(n_s);
    let mut taken = vec![false; n];
    let mut min_sq = vec![f64::INFINITY; n];
    selected.push(first);
    taken[first] = true;

    for _ in 1..n_s {
        let last = *selected.last().unwrap();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let d = sq_dist(coords, i, last);
            if d < min_sq[i] {
                min_sq[i] = d;
            }
            if !taken[i] {
                // strict > keeps the lowest index on ties
                match best {
                    Some((_, bd)) if min_sq[i] <= bd => {}
                    _ => best = Some((i, min_sq[i])),
                }
            }
        }
        let (next, _) = best.expect("n_s <= n leaves a candidate");
        selected.push(next);
        taken[next] = true;
    }
    Ok(selected)
}

/// Ball query around explicit coordinates. Returns the first `k` cloud
/// indices (ascending) within `radius`, padding with the first found index
/// when fewer than `k` qualify.
fn ball_query_row(
    coords: ArrayView2<'_, f64>,
    center: [f64; 3],
    center_id: usize,
    radius: f64,
    k: usize,
) -> Result<Vec<usize>> {
    let r_sq = radius * radius;
    let mut row = Vec::with_capacity(k);
    for i in 0..coords.nrows() {
        let dx = coords[[i, 0]] - center[0];
        let dy = coords[[i, 1]] - center[1];
        let dz = coords[[i, 2]] - center[2];
        if dx * dx + dy * dy + dz * dz <= r_sq {
            row.push(i);
            if row.len() == k {
                break;
            }
        }
    }
    match row.first().copied() {
        None => Err(GamError::EmptyBall {
            center: center_id,
            radius,
        }),
        Some(first) => {
            row.resize(k, first);
            Ok(row)
        }
    }
}

/// Ball query: for each center, up to `k` neighbors within `radius`, in
/// ascending source-index order, padded by repeating the first found
/// neighbor. Centers are cloud members and qualify as their own neighbors.
pub fn ball_query(
    cloud: &PointCloud,
    centers: &[usize],
    radius: f64,
    k: usize,
) -> Result<NeighborhoodIndex> {
    if !(radius > 0.0) {
        return Err(GamError::InvalidInput("radius must be > 0".into()));
    }
    if k == 0 {
        return Err(GamError::InvalidInput("k must be >= 1".into()));
    }
    let coords = cloud.coords();
    let rows: Result<Vec<Vec<usize>>> = centers
        .par_iter()
        .map(|&c| ball_query_row(coords, cloud.point(c), c, radius, k))
        .collect();
    let rows = rows?;
    let flat: Vec<usize> = rows.into_iter().flatten().collect();
    let ids = Array2::from_shape_vec((centers.len(), k), flat).expect("rows have width k");
    NeighborhoodIndex::new(centers.to_vec(), ids, cloud.n_points())
}

fn knn_row(coords: ArrayView2<'_, f64>, center: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..coords.nrows())
        .map(|i| (sq_dist(coords, i, center), i))
        .collect();
    // (distance, index) ordering makes ties deterministic
    order.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    order.truncate(k);
    order.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    order.into_iter().map(|(_, i)| i).collect()
}

/// The `k` nearest points per center, ascending by distance, ties broken by
/// lowest index.
pub fn knn(cloud: &PointCloud, centers: &[usize], k: usize) -> Result<NeighborhoodIndex> {
    let n = cloud.n_points();
    if k > n {
        return Err(GamError::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(GamError::InvalidInput("k must be >= 1".into()));
    }
    let coords = cloud.coords();
    let rows: Vec<Vec<usize>> = centers
        .par_iter()
        .map(|&c| knn_row(coords, c, k))
        .collect();
    let flat: Vec<usize> = rows.into_iter().flatten().collect();
    let ids = Array2::from_shape_vec((centers.len(), k), flat).expect("rows have width k");
    NeighborhoodIndex::new(centers.to_vec(), ids, n)
}

/// Uniform grid over the cloud's bounding box with cell edge `radius`.
/// Accelerates ball query; results are identical to the brute-force path.
pub struct UniformGrid {
    cell: f64,
    origin: [f64; 3],
    dims: [usize; 3],
    // per-cell point indices, each list ascending
    cells: Vec<Vec<usize>>,
}

impl UniformGrid {
    pub fn build(cloud: &PointCloud, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(GamError::InvalidInput("radius must be > 0".into()));
        }
        let coords = cloud.coords();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..coords.nrows() {
            for a in 0..3 {
                lo[a] = lo[a].min(coords[[i, a]]);
                hi[a] = hi[a].max(coords[[i, a]]);
            }
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = (((hi[a] - lo[a]) / radius).floor() as usize + 1).max(1);
        }
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for i in 0..coords.nrows() {
            let c = Self::cell_of(&lo, radius, dims, [
                coords[[i, 0]],
                coords[[i, 1]],
                coords[[i, 2]],
            ]);
            cells[c].push(i);
        }
        Ok(Self {
            cell: radius,
            origin: lo,
            dims,
            cells,
        })
    }

    fn cell_of(origin: &[f64; 3], cell: f64, dims: [usize; 3], p: [f64; 3]) -> usize {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let raw = ((p[a] - origin[a]) / cell).floor();
            idx[a] = (raw.max(0.0) as usize).min(dims[a] - 1);
        }
        (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]
    }

    fn coord_of(&self, p: [f64; 3]) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let raw = ((p[a] - self.origin[a]) / self.cell).floor();
            idx[a] = (raw.max(0.0) as usize).min(self.dims[a] - 1);
        }
        idx
    }

    /// Ball query through the grid. Candidates come from the 27-cell
    /// neighborhood, which covers every point within `radius` of the center.
    pub fn ball_query(
        &self,
        cloud: &PointCloud,
        centers: &[usize],
        radius: f64,
        k: usize,
    ) -> Result<NeighborhoodIndex> {
        if (radius - self.cell).abs() > f64::EPSILON * self.cell {
            return Err(GamError::InvalidInput(
                "grid was built for a different radius".into(),
            ));
        }
        if k == 0 {
            return Err(GamError::InvalidInput("k must be >= 1".into()));
        }
        let coords = cloud.coords();
        let r_sq = radius * radius;
        let rows: Result<Vec<Vec<usize>>> = centers
            .par_iter()
            .map(|&c| {
                let p = cloud.point(c);
                let cc = self.coord_of(p);
                let mut cand = Vec::new();
                for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dz in -1i64..=1 {
                            let x = cc[0] as i64 + dx;
                            let y = cc[1] as i64 + dy;
                            let z = cc[2] as i64 + dz;
                            if x < 0
                                || y < 0
                                || z < 0
                                || x >= self.dims[0] as i64
                                || y >= self.dims[1] as i64
                                || z >= self.dims[2] as i64
                            {
                                continue;
                            }
                            let cell =
                                (x as usize * self.dims[1] + y as usize) * self.dims[2] + z as usize;
                            for &i in &self.cells[cell] {
                                let ddx = coords[[i, 0]] - p[0];
                                let ddy = coords[[i, 1]] - p[1];
                                let ddz = coords[[i, 2]] - p[2];
                                if ddx * ddx + ddy * ddy + ddz * ddz <= r_sq {
                                    cand.push(i);
                                }
                            }
                        }
                    }
                }
                cand.sort_unstable();
                cand.truncate(k);
                match cand.first().copied() {
                    None => Err(GamError::EmptyBall { center: c, radius }),
                    Some(first) => {
                        cand.resize(k, first);
                        Ok(cand)
                    }
                }
            })
            .collect();
        let rows = rows?;
        let flat: Vec<usize> = rows.into_iter().flatten().collect();
        let ids = Array2::from_shape_vec((centers.len(), k), flat).expect("rows have width k");
        NeighborhoodIndex::new(centers.to_vec(), ids, cloud.n_points())
    }
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;

    #[test]
    fn fps_unit_square_picks_opposite_corner() {
        let cloud = PointCloud::from_coords(&[
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            1.0, 1.0, 0.0, //
            0.0, 1.0, 0.0,
        ])
        .unwrap();
        let picked = farthest_point_sample(&cloud, 2, 0).unwrap();
        assert_eq!(picked, vec![0, 2]);
    }

    #[test]
    fn fps_exhaustion_is_a_permutation() {
        let cloud = random_cloud(23, 5);
        let picked = farthest_point_sample(&cloud, 23, 7).unwrap();
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn fps_handles_duplicate_points() {
        let cloud =
            PointCloud::from_coords(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let picked = farthest_point_sample(&cloud, 3, 0).unwrap();
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn fps_matches_brute_force_reference() {
        let cloud = random_cloud(64, 11);
        let fast = farthest_point_sample(&cloud, 8, 3).unwrap();
        let slow = fps_reference(&cloud, 8, 3);
        assert_eq!(fast, slow);
    }

    #[test]
    fn fps_rejects_too_many_centers() {
        let cloud = random_cloud(4, 0);
        assert!(matches!(
            farthest_point_sample(&cloud, 5, 0),
            Err(GamError::TooManyCenters { .. })
        ));
    }

    #[test]
    fn fps_seed_selects_first_point() {
        let cloud = random_cloud(10, 2);
        let picked = farthest_point_sample(&cloud, 1, 13).unwrap();
        assert_eq!(picked, vec![3]);
    }

    /// Min pairwise distance of the FPS set beats any single suffix swap on a
    /// small cloud (spot check by exhaustion).
    #[test]
    fn fps_suffix_swap_does_not_improve() {
        let cloud = random_cloud(14, 9);
        let coords = cloud.coords();
        let picked = farthest_point_sample(&cloud, 5, 0).unwrap();
        let min_pairwise = |set: &[usize]| -> f64 {
            let mut m = f64::INFINITY;
            for (a, &i) in set.iter().enumerate() {
                for &j in &set[a + 1..] {
                    m = m.min(sq_dist(coords, i, j));
                }
            }
            m
        };
        let base = min_pairwise(&picked);
        for candidate in 0..cloud.n_points() {
            if picked.contains(&candidate) {
                continue;
            }
            let mut swapped = picked.clone();
            *swapped.last_mut().unwrap() = candidate;
            assert!(min_pairwise(&swapped) <= base + 1e-12);
        }
    }

    #[test]
    fn ball_exact_k_in_ascending_order() {
        // center 0 with exactly 3 points inside r=1.1
        let cloud = PointCloud::from_coords(&[
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            5.0, 0.0, 0.0,
        ])
        .unwrap();
        let nbrs = ball_query(&cloud, &[0], 1.1, 3).unwrap();
        assert_eq!(nbrs.neighbor_ids().row(0).to_vec(), vec![0, 1, 2]);
    }

    #[test]
    fn ball_pads_with_first_found() {
        let cloud = PointCloud::from_coords(&[0.0, 0.0, 0.0, 10.0, 0.0, 0.0]).unwrap();
        let nbrs = ball_query(&cloud, &[1], 0.5, 4).unwrap();
        assert_eq!(nbrs.neighbor_ids().row(0).to_vec(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn ball_matches_exhaustive_reference() {
        let cloud = random_cloud(32, 21);
        let centers: Vec<usize> = (0..32).step_by(3).collect();
        let nbrs = ball_query(&cloud, &centers, 0.5, 8).unwrap();
        let reference = ball_reference(&cloud, &centers, 0.5, 8);
        for (s, expect) in reference.iter().enumerate() {
            assert_eq!(&nbrs.neighbor_ids().row(s).to_vec(), expect);
        }
    }

    #[test]
    fn ball_results_satisfy_radius() {
        let cloud = random_cloud(40, 3);
        let centers: Vec<usize> = (0..40).collect();
        let r = 0.6;
        let nbrs = ball_query(&cloud, &centers, r, 6).unwrap();
        let coords = cloud.coords();
        for (s, &c) in centers.iter().enumerate() {
            for &i in nbrs.neighbor_ids().row(s) {
                assert!(sq_dist(coords, i, c) <= r * r);
            }
        }
    }

    #[test]
    fn knn_k1_returns_self() {
        let cloud = random_cloud(12, 4);
        let centers: Vec<usize> = (0..12).collect();
        let nbrs = knn(&cloud, &centers, 1).unwrap();
        for (s, &c) in centers.iter().enumerate() {
            assert_eq!(nbrs.neighbor_ids()[[s, 0]], c);
        }
    }

    #[test]
    fn knn_collinear_points() {
        let cloud = PointCloud::from_coords(&[
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            2.0, 0.0, 0.0, //
            3.0, 0.0, 0.0,
        ])
        .unwrap();
        let nbrs = knn(&cloud, &[0], 2).unwrap();
        assert_eq!(nbrs.neighbor_ids().row(0).to_vec(), vec![0, 1]);
    }

    #[test]
    fn knn_matches_full_sort_reference() {
        let cloud = random_cloud(48, 8);
        let centers: Vec<usize> = (0..48).step_by(5).collect();
        let nbrs = knn(&cloud, &centers, 6).unwrap();
        let reference = knn_reference(&cloud, &centers, 6);
        for (s, expect) in reference.iter().enumerate() {
            assert_eq!(&nbrs.neighbor_ids().row(s).to_vec(), expect);
        }
    }

    #[test]
    fn knn_row_distances_nondecreasing() {
        let cloud = random_cloud(30, 15);
        let centers: Vec<usize> = (0..30).collect();
        let nbrs = knn(&cloud, &centers, 7).unwrap();
        let coords = cloud.coords();
        for (s, &c) in centers.iter().enumerate() {
            let ds: Vec<f64> = nbrs
                .neighbor_ids()
                .row(s)
                .iter()
                .map(|&i| sq_dist(coords, i, c))
                .collect();
            assert!(ds.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn knn_rejects_k_too_large() {
        let cloud = random_cloud(5, 0);
        assert!(matches!(
            knn(&cloud, &[0], 6),
            Err(GamError::KTooLarge { .. })
        ));
    }

    #[test]
    fn grid_ball_query_agrees_with_reference() {
        for seed in 0..10u64 {
            let cloud = random_cloud(50 + (seed as usize % 17), seed);
            let centers: Vec<usize> = (0..cloud.n_points()).step_by(2).collect();
            let r = 0.45;
            let grid = UniformGrid::build(&cloud, r).unwrap();
            let fast = grid.ball_query(&cloud, &centers, r, 8).unwrap();
            let slow = ball_query(&cloud, &centers, r, 8).unwrap();
            assert_eq!(fast, slow);
        }
    }
}
