//! Edge geometry and neighborhood gradients.
//!
//! The scalar gradient of an edge is the sine of its zenith angle times the
//! sum of azimuth sine and cosine, computed directly from the relative
//! vector. Vertical edges (zero xy-projection) have no defined azimuth; they
//! are treated as gradient-neutral via an epsilon guard. The PCA plane-fit
//! normal estimator lives here as well: it is the slow baseline the
//! simplified gradient replaces, retained for benchmarking and as a sanity
//! oracle.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};

use crate::error::Result;
use crate::types::{EdgeGeometry, NeighborhoodIndex, PointCloud};

/// Approximate per-edge gradient vectors, unit-norm where defined.
#[derive(Debug, Clone)]
pub struct GradientVectorSet {
    g: Array3<f64>,
    defined_mask: Array2<bool>,
}

impl GradientVectorSet {
    pub fn g(&self) -> &Array3<f64> {
        &self.g
    }

    pub fn defined_mask(&self) -> &Array2<bool> {
        &self.defined_mask
    }
}

/// World-coordinate depth gradients along x and y.
#[derive(Debug, Clone)]
pub struct DepthGradientSet {
    dzdx: Array2<f64>,
    dzdy: Array2<f64>,
    defined_mask: Array2<bool>,
}

impl DepthGradientSet {
    pub fn dzdx(&self) -> &Array2<f64> {
        &self.dzdx
    }

    pub fn dzdy(&self) -> &Array2<f64> {
        &self.dzdy
    }

    pub fn defined_mask(&self) -> &Array2<bool> {
        &self.defined_mask
    }
}

/// Plane-fit normals per neighborhood point, with a mask for degenerate
/// (rank < 2) neighborhoods.
#[derive(Debug, Clone)]
pub struct NormalSet {
    normals: Array3<f64>,
    defined_mask: Array2<bool>,
}

impl NormalSet {
    pub fn normals(&self) -> &Array3<f64> {
        &self.normals
    }

    pub fn defined_mask(&self) -> &Array2<bool> {
        &self.defined_mask
    }
}

#[inline]
fn scalar_gradient(x: f64, y: f64, z: f64, d: f64, eps: f64) -> f64 {
    let rho = (x * x + y * y).sqrt();
    if rho <= eps || d <= eps {
        0.0
    } else {
        (z / d) * ((x + y) / rho)
    }
}

/// Relative vectors, distances and scalar gradients for every edge of the
/// neighborhood graph.
pub fn edge_geometry(
    cloud: &PointCloud,
    nbrs: &NeighborhoodIndex,
    eps: f64,
) -> Result<EdgeGeometry> {
    let ns = nbrs.n_centers();
    let k = nbrs.k();
    let coords = cloud.coords();
    let ids = nbrs.neighbor_ids();

    let mut rel = Array3::zeros((ns, k, 3));
    let mut dist = Array2::zeros((ns, k));
    let mut grad = Array2::zeros((ns, k));

    Zip::from(rel.axis_iter_mut(Axis(0)))
        .and(dist.axis_iter_mut(Axis(0)))
        .and(grad.axis_iter_mut(Axis(0)))
        .and(ids.axis_iter(Axis(0)))
        .and(nbrs.center_ids())
        .par_for_each(|mut rel_row, mut dist_row, mut grad_row, id_row, &c| {
            let px = coords[[c, 0]];
            let py = coords[[c, 1]];
            let pz = coords[[c, 2]];
            for (j, &q) in id_row.iter().enumerate() {
                let x = coords[[q, 0]] - px;
                let y = coords[[q, 1]] - py;
                let z = coords[[q, 2]] - pz;
                let d = (x * x + y * y + z * z).sqrt();
                rel_row[[j, 0]] = x;
                rel_row[[j, 1]] = y;
                rel_row[[j, 2]] = z;
                dist_row[j] = d;
                grad_row[j] = scalar_gradient(x, y, z, d, eps);
            }
        });

    Ok(EdgeGeometry::from_parts_unchecked(rel, dist, grad))
}

/// Unit gradient vectors per edge: the zenith/azimuth decomposition of the
/// normalized relative vector. Undefined where the xy-projection or the edge
/// itself degenerates.
pub fn gradient_vectors(edges: &EdgeGeometry, eps: f64) -> GradientVectorSet {
    let (ns, k) = edges.dist().dim();
    let rel = edges.rel();
    let mut g = Array3::zeros((ns, k, 3));
    let mut mask = Array2::from_elem((ns, k), false);
    for s in 0..ns {
        for j in 0..k {
            let x = rel[[s, j, 0]];
            let y = rel[[s, j, 1]];
            let z = rel[[s, j, 2]];
            let d = edges.dist()[[s, j]];
            let rho = (x * x + y * y).sqrt();
            if rho <= eps || d <= eps {
                continue;
            }
            g[[s, j, 0]] = (z / d) * (x / rho);
            g[[s, j, 1]] = (z / d) * (y / rho);
            g[[s, j, 2]] = rho / d;
            mask[[s, j]] = true;
        }
    }
    GradientVectorSet {
        g,
        defined_mask: mask,
    }
}

/// Depth gradients in world coordinates, the intrinsic-free form.
pub fn depth_gradients(rel: &Array3<f64>, eps: f64) -> DepthGradientSet {
    let (ns, k, _) = rel.dim();
    let mut dzdx = Array2::zeros((ns, k));
    let mut dzdy = Array2::zeros((ns, k));
    let mut mask = Array2::from_elem((ns, k), false);
    for s in 0..ns {
        for j in 0..k {
            let x = rel[[s, j, 0]];
            let y = rel[[s, j, 1]];
            let z = rel[[s, j, 2]];
            let denom = x * x + y * y;
            if denom <= eps * eps {
                continue;
            }
            dzdx[[s, j]] = x * z / denom;
            dzdy[[s, j]] = y * z / denom;
            mask[[s, j]] = true;
        }
    }
    DepthGradientSet {
        dzdx,
        dzdy,
        defined_mask: mask,
    }
}

// Relative spread below which the second eigenvalue counts as zero, i.e. the
// neighborhood is a line or a point and no plane normal exists.
const RANK_TOL: f64 = 1e-9;

/// Eigenvalues of a symmetric 3x3 matrix, ascending. Closed-form
/// trigonometric solution of the characteristic polynomial.
fn sym3_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        let mut eig = [a[0][0], a[1][1], a[2][2]];
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        return eig;
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv = 1.0 / p;
    let b = [
        [
            inv * (a[0][0] - q),
            inv * a[0][1],
            inv * a[0][2],
        ],
        [
            inv * a[0][1],
            inv * (a[1][1] - q),
            inv * a[1][2],
        ],
        [
            inv * a[0][2],
            inv * a[1][2],
            inv * (a[2][2] - q),
        ],
    ];
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let two_pi_third = 2.0 * std::f64::consts::PI / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + two_pi_third).cos();
    let e_mid = 3.0 * q - e_max - e_min;
    [e_min, e_mid, e_max]
}

/// Unit eigenvector for eigenvalue `lambda` via cross products of the rows
/// of `A - lambda I`, picking the most independent pair.
fn sym3_eigenvector(a: &[[f64; 3]; 3], lambda: f64) -> Option<[f64; 3]> {
    let m = [
        [a[0][0] - lambda, a[0][1], a[0][2]],
        [a[0][1], a[1][1] - lambda, a[1][2]],
        [a[0][2], a[1][2], a[2][2] - lambda],
    ];
    let cross = |u: &[f64; 3], v: &[f64; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let c01 = cross(&m[0], &m[1]);
    let c02 = cross(&m[0], &m[2]);
    let c12 = cross(&m[1], &m[2]);
    let n01 = c01[0] * c01[0] + c01[1] * c01[1] + c01[2] * c01[2];
    let n02 = c02[0] * c02[0] + c02[1] * c02[1] + c02[2] * c02[2];
    let n12 = c12[0] * c12[0] + c12[1] * c12[1] + c12[2] * c12[2];
    let (best, norm_sq) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    if norm_sq <= f64::MIN_POSITIVE {
        return None;
    }
    let norm = norm_sq.sqrt();
    Some([best[0] / norm, best[1] / norm, best[2] / norm])
}

/// One plane fit over the points of `row`, summation starting at neighbor
/// `anchor` so that every (s, j) call does its own full pass.
fn fit_plane_normal(coords: ArrayView2<'_, f64>, row: &[usize], anchor: usize) -> Option<[f64; 3]> {
    let k = row.len();
    let inv_k = 1.0 / k as f64;

    let mut mean = [0.0f64; 3];
    for t in 0..k {
        let i = row[(anchor + t) % k];
        mean[0] += coords[[i, 0]];
        mean[1] += coords[[i, 1]];
        mean[2] += coords[[i, 2]];
    }
    mean[0] *= inv_k;
    mean[1] *= inv_k;
    mean[2] *= inv_k;

    let mut cov = [[0.0f64; 3]; 3];
    for t in 0..k {
        let i = row[(anchor + t) % k];
        let dx = coords[[i, 0]] - mean[0];
        let dy = coords[[i, 1]] - mean[1];
        let dz = coords[[i, 2]] - mean[2];
        cov[0][0] += dx * dx;
        cov[0][1] += dx * dy;
        cov[0][2] += dx * dz;
        cov[1][1] += dy * dy;
        cov[1][2] += dy * dz;
        cov[2][2] += dz * dz;
    }
    for r in 0..3 {
        for c in 0..3 {
            cov[r][c] *= inv_k;
        }
    }
    cov[1][0] = cov[0][1];
    cov[2][0] = cov[0][2];
    cov[2][1] = cov[1][2];

    // normalize scale so the rank test is unit-independent
    let scale = cov.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= f64::MIN_POSITIVE {
        return None;
    }
    let mut norm_cov = cov;
    for r in 0..3 {
        for c in 0..3 {
            norm_cov[r][c] /= scale;
        }
    }

    let eig = sym3_eigenvalues(&norm_cov);
    if eig[1] <= RANK_TOL * eig[2].max(f64::MIN_POSITIVE) {
        return None; // line or point: no unique plane normal
    }
    let mut n = sym3_eigenvector(&norm_cov, eig[0])?;
    // orient toward positive z, with x/y fallbacks for in-plane normals
    let flip = n[2] < 0.0
        || (n[2] == 0.0 && n[1] < 0.0)
        || (n[2] == 0.0 && n[1] == 0.0 && n[0] < 0.0);
    if flip {
        n = [-n[0], -n[1], -n[2]];
    }
    Some(n)
}

/// Local-surface-fitting normal baseline: for every neighborhood point, fits
/// a plane to its neighborhood by covariance eigendecomposition and returns
/// the unit normal (smallest eigenvector, oriented toward positive z).
///
/// The fit is evaluated once per neighborhood point, matching the cost
/// profile of the method this crate's scalar gradient replaces. Degenerate
/// neighborhoods (covariance rank < 2) come back masked.
pub fn pca_normals(cloud: &PointCloud, nbrs: &NeighborhoodIndex) -> NormalSet {
    let ns = nbrs.n_centers();
    let k = nbrs.k();
    let coords = cloud.coords();
    let ids = nbrs.neighbor_ids();

    let mut normals = Array3::zeros((ns, k, 3));
    let mut mask = Array2::from_elem((ns, k), false);

    Zip::from(normals.axis_iter_mut(Axis(0)))
        .and(mask.axis_iter_mut(Axis(0)))
        .and(ids.axis_iter(Axis(0)))
        .par_for_each(|mut n_row, mut m_row, id_row| {
            let row = id_row.as_slice().expect("row-major neighbor ids");
            for j in 0..k {
                if let Some(n) = fit_plane_normal(coords, row, j) {
                    n_row[[j, 0]] = n[0];
                    n_row[[j, 1]] = n[1];
                    n_row[[j, 2]] = n[2];
                    m_row[j] = true;
                }
            }
        });

    NormalSet {
        normals,
        defined_mask: mask,
    }
}
