//! Python bindings for the point-cloud gradient attention pipeline.
//!
//! Exposes sampling, neighborhood search, edge gradients, the plane-fit
//! normal baseline, the full attention forward pass, the synthetic shape
//! generator and the timing harness. Arrays cross the boundary as numpy
//! arrays; indices are `uint64`.

use ndarray::{Array1, Array2};
use numpy::{
    IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray1, PyReadonlyArray2,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gam_core::error::GamError;
use gam_core::types::{GamConfig, NeighborhoodIndex, PointCloud};

fn err(e: GamError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cloud_from(
    coords: &PyReadonlyArray2<'_, f64>,
    features: Option<&PyReadonlyArray2<'_, f64>>,
) -> PyResult<PointCloud> {
    let coords = coords.as_array().to_owned();
    let features = features.map(|f| f.as_array().to_owned());
    PointCloud::new(coords, features).map_err(err)
}

fn centers_from(centers: &PyReadonlyArray1<'_, u64>) -> Vec<usize> {
    centers.as_array().iter().map(|&c| c as usize).collect()
}

fn neighborhood_from(
    cloud: &PointCloud,
    centers: &PyReadonlyArray1<'_, u64>,
    neighbors: &PyReadonlyArray2<'_, u64>,
) -> PyResult<NeighborhoodIndex> {
    let ids = neighbors.as_array().mapv(|v| v as usize);
    NeighborhoodIndex::new(centers_from(centers), ids, cloud.n_points()).map_err(err)
}

fn ids_to_numpy<'py>(py: Python<'py>, nbrs: &NeighborhoodIndex) -> Bound<'py, PyArray2<u64>> {
    nbrs.neighbor_ids().mapv(|v| v as u64).into_pyarray(py)
}

#[allow(clippy::too_many_arguments)]
fn config_from(
    lambda: f64,
    radius: f64,
    n_centers: usize,
    k: usize,
    epsilon: f64,
    use_distance: bool,
    use_gradient: bool,
    mlp_hidden: usize,
    seed: u64,
    normalize_distance: bool,
) -> GamConfig {
    GamConfig {
        lambda,
        radius,
        n_centers,
        k_neighbors: k,
        epsilon,
        use_distance,
        use_gradient,
        mlp_hidden,
        seed,
        normalize_distance,
    }
}

/// Farthest point sampling; returns center indices.
#[pyfunction]
#[pyo3(signature = (coords, n_samples, seed = 0))]
fn fps<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    n_samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyArray1<u64>>> {
    let cloud = cloud_from(&coords, None)?;
    let centers =
        gam_core::sampling::farthest_point_sample(&cloud, n_samples, seed).map_err(err)?;
    let out: Array1<u64> = centers.iter().map(|&c| c as u64).collect();
    Ok(out.into_pyarray(py))
}

/// Ball query around the given center indices; rows padded with the first
/// found neighbor.
#[pyfunction]
#[pyo3(signature = (coords, centers, radius, k))]
fn ball_query<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    radius: f64,
    k: usize,
) -> PyResult<Bound<'py, PyArray2<u64>>> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs =
        gam_core::sampling::ball_query(&cloud, &centers_from(&centers), radius, k).map_err(err)?;
    Ok(ids_to_numpy(py, &nbrs))
}

/// The k nearest neighbors per center, ascending by distance.
#[pyfunction]
#[pyo3(signature = (coords, centers, k))]
fn knn<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    k: usize,
) -> PyResult<Bound<'py, PyArray2<u64>>> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs = gam_core::sampling::knn(&cloud, &centers_from(&centers), k).map_err(err)?;
    Ok(ids_to_numpy(py, &nbrs))
}

/// Relative vectors, distances and scalar gradients per edge:
/// `(rel[S,K,3], dist[S,K], grad[S,K])`.
#[pyfunction]
#[pyo3(signature = (coords, centers, neighbors, epsilon = 1e-8))]
fn edge_geometry<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    neighbors: PyReadonlyArray2<'py, u64>,
    epsilon: f64,
) -> PyResult<(
    Bound<'py, PyArray3<f64>>,
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray2<f64>>,
)> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs = neighborhood_from(&cloud, &centers, &neighbors)?;
    let edges = gam_core::geometry::edge_geometry(&cloud, &nbrs, epsilon).map_err(err)?;
    Ok((
        edges.rel().clone().into_pyarray(py),
        edges.dist().clone().into_pyarray(py),
        edges.grad().clone().into_pyarray(py),
    ))
}

/// Unit gradient vectors per edge plus the defined mask:
/// `(g[S,K,3], mask[S,K])`.
#[pyfunction]
#[pyo3(signature = (coords, centers, neighbors, epsilon = 1e-8))]
fn gradient_vectors<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    neighbors: PyReadonlyArray2<'py, u64>,
    epsilon: f64,
) -> PyResult<(Bound<'py, PyArray3<f64>>, Bound<'py, PyArray2<bool>>)> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs = neighborhood_from(&cloud, &centers, &neighbors)?;
    let edges = gam_core::geometry::edge_geometry(&cloud, &nbrs, epsilon).map_err(err)?;
    let gv = gam_core::geometry::gradient_vectors(&edges, epsilon);
    Ok((
        gv.g().clone().into_pyarray(py),
        gv.defined_mask().clone().into_pyarray(py),
    ))
}

/// World-coordinate depth gradients per edge: `(dzdx, dzdy, mask)`.
#[pyfunction]
#[pyo3(signature = (coords, centers, neighbors, epsilon = 1e-8))]
fn depth_gradients<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    neighbors: PyReadonlyArray2<'py, u64>,
    epsilon: f64,
) -> PyResult<(
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray2<bool>>,
)> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs = neighborhood_from(&cloud, &centers, &neighbors)?;
    let edges = gam_core::geometry::edge_geometry(&cloud, &nbrs, epsilon).map_err(err)?;
    let dg = gam_core::geometry::depth_gradients(edges.rel(), epsilon);
    Ok((
        dg.dzdx().clone().into_pyarray(py),
        dg.dzdy().clone().into_pyarray(py),
        dg.defined_mask().clone().into_pyarray(py),
    ))
}

/// Plane-fit normals per neighborhood point (the slow baseline):
/// `(normals[S,K,3], mask[S,K])`.
#[pyfunction]
#[pyo3(signature = (coords, centers, neighbors))]
fn pca_normals<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    centers: PyReadonlyArray1<'py, u64>,
    neighbors: PyReadonlyArray2<'py, u64>,
) -> PyResult<(Bound<'py, PyArray3<f64>>, Bound<'py, PyArray2<bool>>)> {
    let cloud = cloud_from(&coords, None)?;
    let nbrs = neighborhood_from(&cloud, &centers, &neighbors)?;
    let ns = gam_core::geometry::pca_normals(&cloud, &nbrs);
    Ok((
        ns.normals().clone().into_pyarray(py),
        ns.defined_mask().clone().into_pyarray(py),
    ))
}

/// Full pipeline with freshly seeded parameters:
/// `(f_out[S,K,c_out], pooled[S,c_out], centers[S])`.
#[pyfunction]
#[pyo3(signature = (coords, features, c_out = 16, lambda_ = 1.0, radius = 0.5,
    n_centers = 64, k = 16, epsilon = 1e-8, use_distance = true,
    use_gradient = true, mlp_hidden = 16, seed = 0, normalize_distance = false))]
#[allow(clippy::too_many_arguments)]
fn gam_forward<'py>(
    py: Python<'py>,
    coords: PyReadonlyArray2<'py, f64>,
    features: PyReadonlyArray2<'py, f64>,
    c_out: usize,
    lambda_: f64,
    radius: f64,
    n_centers: usize,
    k: usize,
    epsilon: f64,
    use_distance: bool,
    use_gradient: bool,
    mlp_hidden: usize,
    seed: u64,
    normalize_distance: bool,
) -> PyResult<(
    Bound<'py, PyArray3<f64>>,
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray1<u64>>,
)> {
    let cloud = cloud_from(&coords, Some(&features))?;
    let config = config_from(
        lambda_,
        radius,
        n_centers,
        k,
        epsilon,
        use_distance,
        use_gradient,
        mlp_hidden,
        seed,
        normalize_distance,
    );
    let params = gam_core::types::init_params(&config, 2 * cloud.channels(), c_out, seed);
    let ctx = gam_core::gam::prepare(&cloud, &config).map_err(err)?;
    let out = gam_core::gam::forward_prepared(&ctx, &config, &params, gam_core::gam::default_phi)
        .map_err(err)?;
    let centers: Array1<u64> = ctx.centers.iter().map(|&c| c as u64).collect();
    Ok((
        out.f_out().clone().into_pyarray(py),
        out.pooled().clone().into_pyarray(py),
        centers.into_pyarray(py),
    ))
}

/// Synthetic labeled shapes; returns `[(coords[N,3], label), ...]` with
/// labels in {"sphere", "cube", "plane"}.
#[pyfunction]
#[pyo3(signature = (n_per_class, noise_sigma = 0.02, seed = 0))]
fn generate_shapes<'py>(
    py: Python<'py>,
    n_per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<Vec<(Bound<'py, PyArray2<f64>>, &'static str)>> {
    let samples = gam_core::demo::generate_shapes(n_per_class, noise_sigma, seed).map_err(err)?;
    Ok(samples
        .into_iter()
        .map(|s| {
            let coords: Array2<f64> = s.cloud.coords().to_owned();
            (coords.into_pyarray(py), s.label.name())
        })
        .collect())
}

/// Times the zenith/azimuth gradient against the plane-fit baseline on a
/// synthetic cloud; returns the summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (points = 4096, reps = 50, n_centers = 1024, k = 32, radius = 0.5, seed = 0))]
fn bench_gradient_methods(
    py: Python<'_>,
    points: usize,
    reps: usize,
    n_centers: usize,
    k: usize,
    radius: f64,
    seed: u64,
) -> PyResult<String> {
    py.detach(|| {
        let cloud = gam_core::bench::synthetic_bench_cloud(points, seed).map_err(err)?;
        let config = GamConfig {
            n_centers,
            k_neighbors: k,
            radius,
            seed,
            ..GamConfig::default()
        };
        let pair = gam_core::bench::bench_gradient_methods(&cloud, &config, reps).map_err(err)?;
        serde_json::to_string_pretty(&pair).map_err(|e| PyValueError::new_err(e.to_string()))
    })
}

/// Analytic-vs-finite-difference gradient check of the full classifier;
/// returns `(max_abs_err, max_rel_err)`.
#[pyfunction]
#[pyo3(signature = (step = 1e-5, seed = 12))]
fn gradcheck(py: Python<'_>, step: f64, seed: u64) -> PyResult<(f64, f64)> {
    py.detach(|| {
        let report = gam_core::demo::gradcheck_classifier(step, seed).map_err(err)?;
        Ok((report.max_abs_err, report.max_rel_err))
    })
}

#[pymodule]
fn gam_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fps, m)?)?;
    m.add_function(wrap_pyfunction!(ball_query, m)?)?;
    m.add_function(wrap_pyfunction!(knn, m)?)?;
    m.add_function(wrap_pyfunction!(edge_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(depth_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(pca_normals, m)?)?;
    m.add_function(wrap_pyfunction!(gam_forward, m)?)?;
    m.add_function(wrap_pyfunction!(generate_shapes, m)?)?;
    m.add_function(wrap_pyfunction!(bench_gradient_methods, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
