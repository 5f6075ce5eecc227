//! Dense diffusion kernels.
//!
//! The reference graph is read off the product `Γ = P·D·P` where
//!
//! * `D` is the normalized Gaussian affinity of the node features,
//! * `P` is the normalized binary affinity of the training labels.
//!
//! Both go through the same two-step normalization: `W̃ = D₁⁻¹ W D₁⁻¹`
//! with `D₁` the row sums of `W`, followed by `D₂^{-1/2} W̃ D₂^{-1/2}` with
//! `D₂` the row sums of `W̃`. Every stage stays symmetric and nonnegative.
//!
//! Kernels are dense `n × n` matrices; callers keep `n` at cluster scale.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_finite, Label};

/// Relative tolerance used when checking kernel symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStage {
    RawAffinity,
    Normalized,
    Product,
}

impl KernelStage {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelStage::RawAffinity => "raw_affinity",
            KernelStage::Normalized => "normalized",
            KernelStage::Product => "product",
        }
    }

    fn parse(s: &str) -> Option<KernelStage> {
        match s {
            "raw_affinity" => Some(KernelStage::RawAffinity),
            "normalized" => Some(KernelStage::Normalized),
            "product" => Some(KernelStage::Product),
            _ => None,
        }
    }
}

/// Distance used inside the Gaussian kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(x, y)`; zero vectors are at distance 1 from everything else.
    CosineDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub epsilon: f64,
    pub metric: Metric,
}

impl KernelConfig {
    pub fn new(epsilon: f64, metric: Metric) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidScale(epsilon));
        }
        Ok(KernelConfig { epsilon, metric })
    }
}

/// A symmetric nonnegative `n × n` matrix tagged with how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseKernel {
    values: Array2<f64>,
    stage: KernelStage,
}

impl DenseKernel {
    /// Validates squareness, finiteness, nonnegativity and symmetry.
    pub fn new(values: Array2<f64>, stage: KernelStage) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::ShapeMismatch(format!("kernel is {rows}×{cols}")));
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidKernelEntry { row, col });
            }
        }
        check_symmetric(values.view())?;
        Ok(DenseKernel { values, stage })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn stage(&self) -> KernelStage {
        self.stage
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Largest `|a_ij − a_ji|` relative to the largest absolute entry.
    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(self.values.view())
    }
}

fn relative_asymmetry(a: ArrayView2<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst / scale
}

fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::Asymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Pairwise squared distances, clamped at zero.
fn squared_distances(x: ArrayView2<f64>, metric: Metric) -> Array2<f64> {
    let n = x.nrows();
    let gram = x.dot(&x.t());
    let norms: Vec<f64> = (0..n).map(|i| gram[[i, i]]).collect();
    let mut d2 = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let value = match metric {
                Metric::Euclidean => (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0),
                Metric::CosineDistance => {
                    let denom = (norms[i] * norms[j]).sqrt();
                    let cos = if denom > 0.0 { gram[[i, j]] / denom } else { 0.0 };
                    let d = (1.0 - cos).clamp(0.0, 2.0);
                    d * d
                }
            };
            d2[[i, j]] = value;
            d2[[j, i]] = value;
        }
    }
    d2
}

/// Warns once per distinct scale; clustered runs hit the same one many times.
fn warn_underflow(epsilon: f64) {
    static SEEN: Mutex<BTreeSet<u64>> = Mutex::new(BTreeSet::new());
    let first = SEEN.lock().map_or(true, |mut seen| seen.insert(epsilon.to_bits()));
    if first {
        log::warn!("epsilon {epsilon} underflows every off-diagonal affinity to zero");
    } else {
        log::debug!("epsilon {epsilon} underflows every off-diagonal affinity to zero");
    }
}

/// `W(i, j) = exp(−d²(xᵢ, xⱼ) / ε)` with an exact unit diagonal.
pub fn gaussian_affinity(features: ArrayView2<f64>, cfg: &KernelConfig) -> Result<DenseKernel> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::InvalidScale(cfg.epsilon));
    }
    check_finite(features)?;
    let n = features.nrows();
    let mut w = squared_distances(features, cfg.metric);
    let mut any_positive = false;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { 1.0 } else { (-w[[i, j]] / cfg.epsilon).exp() };
            any_positive |= i != j && v > 0.0;
            w[[i, j]] = v;
        }
    }
    if n > 1 && !any_positive {
        warn_underflow(cfg.epsilon);
    }
    Ok(DenseKernel {
        values: w,
        stage: KernelStage::RawAffinity,
    })
}

/// Binary label affinity: 1 on the diagonal and between two nodes whose
/// (known) labels agree, 0 elsewhere. Pass only training labels; every other
/// node must be `None`.
pub fn label_affinity(train_labels: &[Option<Label>]) -> DenseKernel {
    let n = train_labels.len();
    let mut w = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        w[[i, i]] = 1.0;
        let Some(li) = train_labels[i] else { continue };
        for j in (i + 1)..n {
            if train_labels[j] == Some(li) {
                w[[i, j]] = 1.0;
                w[[j, i]] = 1.0;
            }
        }
    }
    DenseKernel {
        values: w,
        stage: KernelStage::RawAffinity,
    }
}

fn row_sums(a: &Array2<f64>) -> Vec<f64> {
    a.sum_axis(Axis(1)).to_vec()
}

/// Two-step normalization `D₂^{-1/2} (D₁⁻¹ W D₁⁻¹) D₂^{-1/2}`.
pub fn normalize(w: &DenseKernel) -> Result<DenseKernel> {
    let a = &w.values;
    let n = a.nrows();
    let d1 = row_sums(a);
    if let Some(node) = d1.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::ZeroRowSum { node });
    }
    let mut tilde = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            tilde[[i, j]] = a[[i, j]] / (d1[i] * d1[j]);
        }
    }
    let d2 = row_sums(&tilde);
    if let Some(node) = d2.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::ZeroRowSum { node });
    }
    for i in 0..n {
        for j in 0..n {
            tilde[[i, j]] /= (d2[i] * d2[j]).sqrt();
        }
    }
    Ok(DenseKernel {
        values: tilde,
        stage: KernelStage::Normalized,
    })
}

/// `Γ = P·D·P`, mirrored so that round-off cannot break symmetry.
pub fn pdp_product(p: &DenseKernel, d: &DenseKernel) -> Result<DenseKernel> {
    for k in [p, d] {
        if k.stage != KernelStage::Normalized {
            return Err(Error::WrongStage {
                expected: KernelStage::Normalized,
                found: k.stage,
            });
        }
    }
    if p.n() != d.n() {
        return Err(Error::ShapeMismatch(format!(
            "P is {0}×{0}, D is {1}×{1}",
            p.n(),
            d.n()
        )));
    }
    let mut gamma = p.values.dot(&d.values).dot(&p.values);
    let n = gamma.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (gamma[[i, j]] + gamma[[j, i]]);
            gamma[[i, j]] = avg;
            gamma[[j, i]] = avg;
        }
    }
    // Products of nonnegative matrices are nonnegative; clear -0.0.
    gamma.mapv_inplace(|v| v.max(0.0));
    Ok(DenseKernel {
        values: gamma,
        stage: KernelStage::Product,
    })
}

/// Writes `kernel` as row-major little-endian `f64` to `bin_path` and a
/// `key=value` header (`n`, `stage`, `epsilon`, `dtype`, `layout`) to
/// `meta_path`.
pub fn write_kernel_dump(
    kernel: &DenseKernel,
    epsilon: f64,
    bin_path: &Path,
    meta_path: &Path,
) -> Result<()> {
    let mut bin = BufWriter::new(File::create(bin_path)?);
    for v in kernel.values.iter() {
        bin.write_all(&v.to_le_bytes())?;
    }
    bin.flush()?;
    let mut meta = BufWriter::new(File::create(meta_path)?);
    writeln!(meta, "n={}", kernel.n())?;
    writeln!(meta, "stage={}", kernel.stage.as_str())?;
    writeln!(meta, "epsilon={epsilon:e}")?;
    writeln!(meta, "dtype=f64le")?;
    writeln!(meta, "layout=row-major")?;
    meta.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_kernel_dump`]; returns the kernel and its epsilon.
pub fn read_kernel_dump(bin_path: &Path, meta_path: &Path) -> Result<(DenseKernel, f64)> {
    let meta = std::fs::read_to_string(meta_path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: meta_path.to_path_buf(),
        line,
        message,
    };
    let (mut n, mut stage, mut epsilon) = (None, None, None);
    for (idx, line) in meta.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|e| parse_err(idx + 1, e.to_string()))?),
            "stage" => {
                stage = Some(
                    KernelStage::parse(value)
                        .ok_or_else(|| parse_err(idx + 1, format!("unknown stage {value:?}")))?,
                )
            }
            "epsilon" => {
                epsilon = Some(value.parse::<f64>().map_err(|e| parse_err(idx + 1, e.to_string()))?)
            }
            _ => {}
        }
    }
    let n = n.ok_or_else(|| parse_err(0, "missing n".into()))?;
    let stage = stage.ok_or_else(|| parse_err(0, "missing stage".into()))?;
    let epsilon = epsilon.ok_or_else(|| parse_err(0, "missing epsilon".into()))?;
    let mut bytes = Vec::with_capacity(n * n * 8);
    BufReader::new(File::open(bin_path)?).read_to_end(&mut bytes)?;
    if bytes.len() != n * n * 8 {
        return Err(Error::ShapeMismatch(format!(
            "kernel dump has {} bytes, expected {}",
            bytes.len(),
            n * n * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let values = Array2::from_shape_vec((n, n), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok((DenseKernel::new(values, stage)?, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cfg(epsilon: f64) -> KernelConfig {
        KernelConfig::new(epsilon, Metric::Euclidean).unwrap()
    }

    #[test]
    fn identical_rows_give_all_ones() {
        let w = gaussian_affinity(array![[0.3, 1.0], [0.3, 1.0]].view(), &cfg(0.1)).unwrap();
        assert_eq!(w.values(), &array![[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(w.stage(), KernelStage::RawAffinity);
    }

    #[test]
    fn scalar_pair_matches_formula() {
        let w = gaussian_affinity(array![[0.0], [1.0]].view(), &cfg(1.0)).unwrap();
        assert_eq!(w.values()[[0, 1]], (-1.0f64).exp());
        assert!((w.values()[[0, 1]] - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn huge_scale_tends_to_ones() {
        let x = array![[0.0, 3.0], [1.0, -2.0], [4.0, 0.5]];
        let w = gaussian_affinity(x.view(), &cfg(1e12)).unwrap();
        assert!(w.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(KernelConfig::new(0.0, Metric::Euclidean), Err(Error::InvalidScale(_))));
        let bad = KernelConfig { epsilon: -1.0, metric: Metric::Euclidean };
        assert!(gaussian_affinity(array![[0.0], [1.0]].view(), &bad).is_err());
        assert!(matches!(
            gaussian_affinity(array![[0.0], [f64::INFINITY]].view(), &cfg(1.0)),
            Err(Error::NonFiniteFeatures { row: 1, col: 0 })
        ));
    }

    #[test]
    fn tiny_scale_degenerates_to_identity() {
        let w = gaussian_affinity(array![[0.0], [10.0]].view(), &cfg(1e-8)).unwrap();
        assert_eq!(w.values(), &Array2::<f64>::eye(2));
    }

    #[test]
    fn cosine_distance_of_parallel_vectors_is_zero() {
        let cosine = KernelConfig::new(1.0, Metric::CosineDistance).unwrap();
        let w = gaussian_affinity(array![[1.0, 1.0], [2.0, 2.0], [1.0, -1.0]].view(), &cosine).unwrap();
        assert!((w.values()[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((w.values()[[0, 2]] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn label_affinity_examples() {
        let w = label_affinity(&[Some(0), Some(0), None]);
        assert_eq!(
            w.values(),
            &array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        assert_eq!(label_affinity(&[None, None, None]).values(), &Array2::<f64>::eye(3));
        assert_eq!(label_affinity(&[Some(0), Some(1)]).values(), &Array2::<f64>::eye(2));
    }

    #[test]
    fn normalize_worked_examples() {
        let ones = DenseKernel::new(Array2::ones((2, 2)), KernelStage::RawAffinity).unwrap();
        let d = normalize(&ones).unwrap();
        assert_eq!(d.values(), &array![[0.5, 0.5], [0.5, 0.5]]);
        let eye = DenseKernel::new(Array2::eye(3), KernelStage::RawAffinity).unwrap();
        assert_eq!(normalize(&eye).unwrap().values(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn normalize_reports_zero_row() {
        let w = DenseKernel::new(array![[1.0, 0.0], [0.0, 0.0]], KernelStage::RawAffinity).unwrap();
        assert!(matches!(normalize(&w), Err(Error::ZeroRowSum { node: 1 })));
    }

    #[test]
    fn product_identity_absorption() {
        let x = array![[0.0, 1.0], [0.5, 0.2], [2.0, 2.0]];
        let d = normalize(&gaussian_affinity(x.view(), &cfg(1.0)).unwrap()).unwrap();
        let eye = normalize(&DenseKernel::new(Array2::eye(3), KernelStage::RawAffinity).unwrap()).unwrap();
        assert_eq!(pdp_product(&eye, &d).unwrap().values(), d.values());
        let p2 = pdp_product(&d, &eye).unwrap();
        let expected = d.values().dot(d.values());
        for (a, b) in p2.values().iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn product_requires_normalized_inputs() {
        let raw = label_affinity(&[None, None]);
        assert!(matches!(
            pdp_product(&raw, &raw),
            Err(Error::WrongStage { .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = normalize(&label_affinity(&[Some(1), None, Some(1)])).unwrap();
        let (bin, meta) = (dir.path().join("kernel.bin"), dir.path().join("kernel.meta"));
        write_kernel_dump(&k, 1e-3, &bin, &meta).unwrap();
        let (back, eps) = read_kernel_dump(&bin, &meta).unwrap();
        assert_eq!(back, k);
        assert_eq!(eps, 1e-3);
        assert_eq!(std::fs::metadata(&bin).unwrap().len(), 9 * 8);
        let text = std::fs::read_to_string(&meta).unwrap();
        assert!(text.starts_with("n=3\nstage=normalized\nepsilon=1e-3\n"));
    }

    fn features(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n * d)
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    }

    fn rotation(theta: f64) -> Array2<f64> {
        array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]]
    }

    proptest! {
        #[test]
        fn every_stage_symmetric_nonnegative(
            x in features(7, 3),
            labels in proptest::collection::vec(proptest::option::of(0u32..3), 7),
            eps in 0.05f64..50.0,
        ) {
            let w = gaussian_affinity(x.view(), &cfg(eps)).unwrap();
            let d = normalize(&w).unwrap();
            let p = normalize(&label_affinity(&labels)).unwrap();
            let gamma = pdp_product(&p, &d).unwrap();
            for k in [&w, &d, &p, &gamma] {
                prop_assert!(k.asymmetry() <= 1e-12);
                prop_assert!(k.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
            }
            prop_assert!(w.values().diag().iter().all(|v| *v == 1.0));
            prop_assert!(d.values().sum_axis(Axis(1)).iter().all(|s| *s > 0.0));
        }

        #[test]
        fn euclidean_affinity_rigid_invariant(
            x in features(6, 2),
            theta in 0.0f64..6.3,
            shift in (-5.0f64..5.0, -5.0f64..5.0),
        ) {
            let moved = x.dot(&rotation(theta).t()) + &array![shift.0, shift.1];
            let a = gaussian_affinity(x.view(), &cfg(2.0)).unwrap();
            let b = gaussian_affinity(moved.view(), &cfg(2.0)).unwrap();
            for (u, v) in a.values().iter().zip(b.values().iter()) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }

        #[test]
        fn random_symmetric_product_is_symmetric(values in proptest::collection::vec(0.01f64..1.0, 12)) {
            let sym = |v: &[f64]| {
                let mut a = Array2::<f64>::zeros((3, 3));
                let mut it = v.iter();
                for i in 0..3 {
                    for j in i..3 {
                        let x = *it.next().unwrap();
                        a[[i, j]] = x;
                        a[[j, i]] = x;
                    }
                }
                normalize(&DenseKernel::new(a, KernelStage::RawAffinity).unwrap()).unwrap()
            };
            let gamma = pdp_product(&sym(&values[..6]), &sym(&values[6..])).unwrap();
            prop_assert!(gamma.asymmetry() <= 1e-12);
        }
    }
}
