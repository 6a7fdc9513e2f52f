//! Bayesian model averaging and uncertainty decompositions.
//!
//! For draws `c_1..c_T` with mean `c`, the Kwon matrices are
//! `A = mean_t(diag(c_t) - c_t c_t^T)` and `E = mean_t((c_t - c)(c_t - c)^T)`,
//! which sum to `diag(c) - c c^T`. The entropy split is
//! `TU = H(c)`, `AU = mean_t H(c_t)` and `EU = TU - AU` (mutual information),
//! all in bits.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Architecture, Network, ParamVector};
use crate::posterior::{ensemble_draws_with, swag_draws_with, SoftmaxDraws, SwagPosterior};
use crate::prob::{entropy_bits, entropy_bits_slice, ProbVector};
use crate::rng::RngStream;
use crate::scalar::Real;

/// Rounding slack below which a negative mutual information is reported as 0.
pub const EU_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KwonMatrices<T> {
    pub aleatoric: Matrix<T>,
    pub epistemic: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoDecomposition<T> {
    pub total: T,
    pub aleatoric: T,
    pub epistemic: T,
}

/// Running mean over the rows, so identical rows average to themselves exactly.
pub fn bma<T: Real>(draws: &SoftmaxDraws<T>) -> ProbVector<T> {
    let mut mean = draws.row(0).to_vec();
    for (t, row) in draws.rows().enumerate().skip(1) {
        let w = T::one() / T::from_usize_lossy(t + 1);
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += (v - *m) * w;
        }
    }
    ProbVector::new(mean).expect("the mean of probability vectors is a probability vector")
}

pub fn kwon_decompose<T: Real>(draws: &SoftmaxDraws<T>) -> KwonMatrices<T> {
    let k = draws.class_count();
    let c = bma(draws);
    let c = c.values();
    let mut al = Matrix::filled(k, k, T::zero());
    let mut ep = Matrix::filled(k, k, T::zero());
    for row in draws.rows() {
        for i in 0..k {
            let di = row[i] - c[i];
            for j in i..k {
                let outer = row[i] * row[j];
                let a = if i == j { row[i] - outer } else { -outer };
                al.set(i, j, al.get(i, j) + a);
                ep.set(i, j, ep.get(i, j) + di * (row[j] - c[j]));
            }
        }
    }
    let inv = T::one() / T::from_usize_lossy(draws.draw_count());
    for i in 0..k {
        for j in i..k {
            let (a, e) = (al.get(i, j) * inv, ep.get(i, j) * inv);
            al.set(i, j, a);
            al.set(j, i, a);
            ep.set(i, j, e);
            ep.set(j, i, e);
        }
    }
    KwonMatrices {
        aleatoric: al,
        epistemic: ep,
    }
}

pub fn info_decompose<T: Real>(draws: &SoftmaxDraws<T>) -> InfoDecomposition<T> {
    let total = entropy_bits(&bma(draws));
    let aleatoric = draws.rows().map(entropy_bits_slice).sum::<T>() / T::from_usize_lossy(draws.draw_count());
    let mut epistemic = total - aleatoric;
    if epistemic < T::zero() && epistemic >= -T::lit(EU_CLAMP) {
        epistemic = T::zero();
    }
    InfoDecomposition {
        total,
        aleatoric,
        epistemic,
    }
}

/// Source of softmax draws for `evaluate`.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a, T> {
    /// `draws` weight samples per input.
    Swag { posterior: &'a SwagPosterior<T>, draws: usize },
    /// One draw per member.
    Ensemble(&'a [ParamVector<T>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<T> {
    pub sample_id: usize,
    pub label: usize,
    pub bma: ProbVector<T>,
    pub predicted: usize,
    pub total_bits: T,
    pub aleatoric_bits: T,
    pub epistemic_bits: T,
    pub kwon: KwonMatrices<T>,
}

impl<T: Real> SampleRecord<T> {
    pub fn from_draws(sample_id: usize, label: usize, draws: &SoftmaxDraws<T>) -> Self {
        let bma = bma(draws);
        let info = info_decompose(draws);
        Self {
            sample_id,
            label,
            predicted: bma.argmax(),
            bma,
            total_bits: info.total,
            aleatoric_bits: info.aleatoric,
            epistemic_bits: info.epistemic,
            kwon: kwon_decompose(draws),
        }
    }

    pub fn confidence(&self) -> T {
        self.bma.max()
    }

    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassUncertainty {
    pub count: usize,
    pub mean_tu: Option<f64>,
    pub mean_au: Option<f64>,
    pub mean_eu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport<T> {
    pub class_names: Vec<String>,
    pub records: Vec<SampleRecord<T>>,
    /// Rows are true classes, columns predictions, each row in percent.
    pub confusion: Matrix<f64>,
    pub mean_aleatoric: Matrix<T>,
    pub mean_epistemic: Matrix<T>,
    pub per_class: Vec<ClassUncertainty>,
}

impl<T: Real> UncertaintyReport<T> {
    /// Aggregates records in the given order.
    pub fn from_records(class_names: Vec<String>, records: Vec<SampleRecord<T>>) -> Result<Self> {
        let k = class_names.len();
        if records.is_empty() {
            return Err(Error::invalid("no samples to evaluate"));
        }
        if let Some(r) = records.iter().find(|r| r.label >= k || r.bma.len() != k) {
            return Err(Error::invalid(format!("sample {} does not match {k} classes", r.sample_id)));
        }
        let mut counts = Matrix::filled(k, k, 0usize);
        let mut al = Matrix::filled(k, k, T::zero());
        let mut ep = Matrix::filled(k, k, T::zero());
        let mut sums = vec![(0usize, 0.0, 0.0, 0.0); k];
        for r in &records {
            counts.set(r.label, r.predicted, counts.get(r.label, r.predicted) + 1);
            for (acc, &v) in al.as_mut_slice().iter_mut().zip(r.kwon.aleatoric.as_slice()) {
                *acc += v;
            }
            for (acc, &v) in ep.as_mut_slice().iter_mut().zip(r.kwon.epistemic.as_slice()) {
                *acc += v;
            }
            let s = &mut sums[r.label];
            s.0 += 1;
            s.1 += r.total_bits.as_f64();
            s.2 += r.aleatoric_bits.as_f64();
            s.3 += r.epistemic_bits.as_f64();
        }
        let inv = T::one() / T::from_usize_lossy(records.len());
        al.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
        ep.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
        let mut confusion = Matrix::filled(k, k, 0.0);
        for i in 0..k {
            let total: usize = counts.row(i).iter().sum();
            if total > 0 {
                for j in 0..k {
                    confusion.set(i, j, 100.0 * counts.get(i, j) as f64 / total as f64);
                }
            }
        }
        let per_class = sums
            .into_iter()
            .map(|(n, tu, au, eu)| {
                let mean = |s: f64| (n > 0).then(|| s / n as f64);
                ClassUncertainty {
                    count: n,
                    mean_tu: mean(tu),
                    mean_au: mean(au),
                    mean_eu: mean(eu),
                }
            })
            .collect();
        Ok(Self {
            class_names,
            records,
            confusion,
            mean_aleatoric: al,
            mean_epistemic: ep,
            per_class,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        self.records.iter().filter(|r| r.correct()).count() as f64 / self.records.len() as f64
    }

    fn mean_of(&self, f: impl Fn(&SampleRecord<T>) -> T) -> f64 {
        self.records.iter().map(|r| f(r).as_f64()).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_tu(&self) -> f64 {
        self.mean_of(|r| r.total_bits)
    }

    pub fn mean_au(&self) -> f64 {
        self.mean_of(|r| r.aleatoric_bits)
    }

    pub fn mean_eu(&self) -> f64 {
        self.mean_of(|r| r.epistemic_bits)
    }

    /// Accuracy of the `fraction` of samples with the highest TU (at least one).
    pub fn accuracy_of_most_uncertain(&self, fraction: f64) -> f64 {
        let mut order: Vec<&SampleRecord<T>> = self.records.iter().collect();
        order.sort_by(|a, b| b.total_bits.partial_cmp(&a.total_bits).expect("finite entropies"));
        let n = ((fraction * order.len() as f64).ceil() as usize).clamp(1, order.len());
        order[..n].iter().filter(|r| r.correct()).count() as f64 / n as f64
    }

    /// `sample_id,true,pred,tu_bits,au_bits,eu_bits,confidence`.
    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample_id,true,pred,tu_bits,au_bits,eu_bits,confidence")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.sample_id,
                self.class_names[r.label],
                self.class_names[r.predicted],
                r.total_bits,
                r.aleatoric_bits,
                r.epistemic_bits,
                r.confidence()
            )?;
        }
        Ok(())
    }

    /// `class,count,mean_tu,mean_au,mean_eu`; classes without samples have
    /// empty means.
    pub fn write_class_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "class,count,mean_tu,mean_au,mean_eu")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (name, c) in self.class_names.iter().zip(&self.per_class) {
            writeln!(w, "{name},{},{},{},{}", c.count, opt(c.mean_tu), opt(c.mean_au), opt(c.mean_eu))?;
        }
        Ok(())
    }
}

/// K x K grid with a `class` header column followed by the class names.
pub fn write_matrix_csv<T: std::fmt::Display + Copy, W: Write>(m: &Matrix<T>, class_names: &[String], mut w: W) -> std::io::Result<()> {
    writeln!(w, "class,{}", class_names.join(","))?;
    for (name, row) in class_names.iter().zip(m.row_iter()) {
        write!(w, "{name}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_with<F>(path: impl AsRef<Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let path = path.as_ref();
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Per-sample draws, decompositions and aggregates over `indices`.
///
/// Sample `i` of the dataset draws SWAG weights from `rng.split(i)`, so a
/// sample's result does not depend on which other samples are evaluated or
/// on thread scheduling.
pub fn evaluate<T: Real>(
    arch: &Architecture,
    predictor: Predictor<'_, T>,
    dataset: &Dataset,
    indices: &[usize],
    rng: &RngStream,
) -> Result<UncertaintyReport<T>> {
    if indices.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::invalid(format!("evaluation index {bad} out of range")));
    }
    if arch.class_count != dataset.class_count() {
        return Err(Error::invalid(format!(
            "architecture has {} classes, dataset has {}",
            arch.class_count,
            dataset.class_count()
        )));
    }
    let net = Network::new(arch)?;
    let records = indices
        .par_iter()
        .map(|&i| {
            let sample = &dataset.samples()[i];
            let x = sample.values.map(T::lit);
            let draws = match predictor {
                Predictor::Swag { posterior, draws } => swag_draws_with(&net, posterior, &x, draws, &mut rng.split(i as u64))?,
                Predictor::Ensemble(members) => ensemble_draws_with(&net, members, &x)?,
            };
            Ok(SampleRecord::from_draws(i, sample.label, &draws))
        })
        .collect::<Result<Vec<_>>>()?;
    UncertaintyReport::from_records(dataset.class_names().to_vec(), records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRow {
    pub threshold: f64,
    /// Accuracy of samples with `TU < threshold`.
    pub acc_confident: Option<f64>,
    /// Accuracy of samples with `TU >= threshold`.
    pub acc_uncertain: Option<f64>,
    pub n_confident: usize,
    pub n_uncertain: usize,
}

/// `0, 0.05, ...` up to `log2 K`.
pub fn default_thresholds(class_count: usize) -> Vec<f64> {
    let max = (class_count as f64).log2();
    (0..).map(|i| i as f64 * 0.05).take_while(|&t| t <= max + 1e-12).collect()
}

pub fn entropy_threshold_sweep<T: Real>(report: &UncertaintyReport<T>, thresholds: &[f64]) -> Vec<ThresholdRow> {
    thresholds
        .iter()
        .map(|&tau| {
            let (mut nc, mut hc, mut nu, mut hu) = (0, 0, 0, 0);
            for r in &report.records {
                if r.total_bits.as_f64() < tau {
                    nc += 1;
                    hc += r.correct() as usize;
                } else {
                    nu += 1;
                    hu += r.correct() as usize;
                }
            }
            let acc = |hits: usize, n: usize| (n > 0).then(|| hits as f64 / n as f64);
            ThresholdRow {
                threshold: tau,
                acc_confident: acc(hc, nc),
                acc_uncertain: acc(hu, nu),
                n_confident: nc,
                n_uncertain: nu,
            }
        })
        .collect()
}

/// `threshold,acc_confident,acc_uncertain,n_confident,n_uncertain`; undefined
/// accuracies are empty fields.
pub fn write_sweep_csv<W: Write>(rows: &[ThresholdRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "threshold,acc_confident,acc_uncertain,n_confident,n_uncertain")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.threshold,
            opt(r.acc_confident),
            opt(r.acc_uncertain),
            r.n_confident,
            r.n_uncertain
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn draws(rows: &[&[f64]]) -> SoftmaxDraws<f64> {
        SoftmaxDraws::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn bma_examples() {
        let m = bma(&draws(&[&[0.8, 0.2], &[0.6, 0.4]]));
        assert_abs_diff_eq!(m.values()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(m.values()[1], 0.3, epsilon = 1e-15);
        assert_eq!(bma(&draws(&[&[1.0, 0.0], &[0.0, 1.0]])).values(), &[0.5, 0.5]);
        let p = [0.1, 0.2, 0.7];
        assert_eq!(bma(&draws(&[&p, &p, &p])).values(), &p);
    }

    #[test]
    fn kwon_examples() {
        let k = kwon_decompose(&draws(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(k.aleatoric.as_slice(), &[0.0; 4]);
        assert_eq!(k.epistemic.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
        let k = kwon_decompose(&draws(&[&[0.5, 0.5], &[0.5, 0.5]]));
        assert_eq!(k.aleatoric.as_slice(), &[0.25, -0.25, -0.25, 0.25]);
        assert_eq!(k.epistemic.as_slice(), &[0.0; 4]);
        let k = kwon_decompose(&draws(&[&[0.2, 0.3, 0.5]]));
        assert!(k.epistemic.as_slice().iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(k.aleatoric.get(0, 0), 0.2 - 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(k.aleatoric.get(1, 2), -0.15, epsilon = 1e-15);
    }

    #[test]
    fn info_examples() {
        let i = info_decompose(&draws(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!((i.total, i.aleatoric, i.epistemic), (1.0, 0.0, 1.0));
        let i = info_decompose(&draws(&[&[0.5, 0.5], &[0.5, 0.5]]));
        assert_eq!((i.total, i.aleatoric, i.epistemic), (1.0, 1.0, 0.0));
        let p = [0.1, 0.6, 0.3];
        let i = info_decompose(&draws(&[&p, &p, &p, &p]));
        assert_eq!(i.epistemic, 0.0);
        assert_abs_diff_eq!(i.total, entropy_bits_slice(&p), epsilon = 1e-12);
        assert_abs_diff_eq!(i.aleatoric, entropy_bits_slice(&p), epsilon = 1e-12);
    }

    fn random_draws() -> impl Strategy<Value = SoftmaxDraws<f64>> {
        (1usize..8, 2usize..9).prop_flat_map(|(s, k)| {
            prop::collection::vec(prop::collection::vec(-6.0f64..6.0, k), s).prop_map(|logits| {
                let rows: Vec<Vec<f64>> = logits
                    .iter()
                    .map(|l| crate::prob::softmax(l).unwrap().into_vec())
                    .collect();
                SoftmaxDraws::from_rows(&rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn kwon_total_identity(d in random_draws()) {
            let k = kwon_decompose(&d);
            let c = bma(&d);
            let c = c.values();
            for i in 0..c.len() {
                for j in 0..c.len() {
                    let closed = if i == j { c[i] } else { 0.0 } - c[i] * c[j];
                    prop_assert!((k.aleatoric.get(i, j) + k.epistemic.get(i, j) - closed).abs() <= 1e-12);
                    prop_assert_eq!(k.aleatoric.get(i, j), k.aleatoric.get(j, i));
                    if i == j {
                        prop_assert!((0.0..=0.25).contains(&k.aleatoric.get(i, i)));
                    } else {
                        prop_assert!((-0.25..=0.0).contains(&k.aleatoric.get(i, j)));
                    }
                }
            }
        }

        #[test]
        fn info_bounds(d in random_draws()) {
            let i = info_decompose(&d);
            let max = (d.class_count() as f64).log2();
            prop_assert!(i.epistemic >= 0.0);
            prop_assert!((i.total - i.aleatoric - i.epistemic).abs() <= 1e-9);
            prop_assert!(i.total <= max + 1e-9 && i.aleatoric <= max + 1e-9 && i.aleatoric >= 0.0);
        }

        #[test]
        fn class_permutation_equivariance(d in random_draws(), seed in any::<u64>()) {
            let k = d.class_count();
            let mut perm: Vec<usize> = (0..k).collect();
            crate::rng::seeded_stream(seed).shuffle(&mut perm);
            let rows: Vec<Vec<f64>> = d.rows().map(|r| perm.iter().map(|&p| r[p]).collect()).collect();
            let pd = SoftmaxDraws::from_rows(&rows).unwrap();
            let (a, b) = (kwon_decompose(&d), kwon_decompose(&pd));
            for i in 0..k {
                for j in 0..k {
                    prop_assert!((b.aleatoric.get(i, j) - a.aleatoric.get(perm[i], perm[j])).abs() <= 1e-15);
                    prop_assert!((b.epistemic.get(i, j) - a.epistemic.get(perm[i], perm[j])).abs() <= 1e-15);
                }
            }
            let (ia, ib) = (info_decompose(&d), info_decompose(&pd));
            prop_assert!((ia.total - ib.total).abs() <= 1e-12);
        }

        #[test]
        fn bma_argmax_ignores_row_order(d in random_draws()) {
            let mut rows: Vec<Vec<f64>> = d.rows().map(|r| r.to_vec()).collect();
            rows.reverse();
            let rd = SoftmaxDraws::from_rows(&rows).unwrap();
            let (a, b) = (bma(&d), bma(&rd));
            let gap = {
                let mut v = a.values().to_vec();
                v.sort_by(|x, y| y.partial_cmp(x).unwrap());
                v[0] - v[1]
            };
            // exact ties may be split either way by rounding
            prop_assume!(gap > 1e-12);
            prop_assert_eq!(a.argmax(), b.argmax());
        }
    }

    fn report_from(rows: &[(usize, Vec<Vec<f64>>)], k: usize) -> UncertaintyReport<f64> {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (label, r))| SampleRecord::from_draws(i, *label, &SoftmaxDraws::from_rows(r).unwrap()))
            .collect();
        UncertaintyReport::from_records(names(k), records).unwrap()
    }

    #[test]
    fn perfect_oracle_report() {
        let k = 3;
        let rows: Vec<_> = (0..9)
            .map(|i| {
                let mut one = vec![0.0; k];
                one[i % k] = 1.0;
                (i % k, vec![one.clone(), one])
            })
            .collect();
        let r = report_from(&rows, k);
        assert_eq!(r.accuracy(), 1.0);
        for i in 0..k {
            for j in 0..k {
                assert_eq!(r.confusion.get(i, j), if i == j { 100.0 } else { 0.0 });
            }
        }
        assert!(r.records.iter().all(|s| s.total_bits == 0.0 && s.aleatoric_bits == 0.0 && s.epistemic_bits == 0.0));
    }

    #[test]
    fn uniform_predictor_picks_first_class() {
        let k = 4;
        let rows: Vec<_> = (0..8).map(|i| (i % k, vec![vec![0.25; 4]])).collect();
        let r = report_from(&rows, k);
        assert!(r.records.iter().all(|s| s.total_bits == 2.0 && s.predicted == 0));
        for i in 0..k {
            assert_eq!(r.confusion.get(i, 0), 100.0);
        }
        assert_eq!(r.per_class[1].mean_tu, Some(2.0));
    }

    #[test]
    fn biased_coin_accuracy_is_class_zero_fraction() {
        let eps = 0.01;
        let labels = [0, 1, 1, 0, 1, 1, 1, 0, 1, 1];
        let rows: Vec<_> = labels.iter().map(|&l| (l, vec![vec![0.5 + eps, 0.5 - eps]])).collect();
        assert_eq!(report_from(&rows, 2).accuracy(), 0.3);
    }

    #[test]
    fn mean_matrices_average_per_sample() {
        let rows = vec![
            (0, vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            (1, vec![vec![0.5, 0.5]]),
        ];
        let r = report_from(&rows, 2);
        assert_eq!(r.mean_aleatoric.as_slice(), &[0.125, -0.125, -0.125, 0.125]);
        assert_eq!(r.mean_epistemic.as_slice(), &[0.125, -0.125, -0.125, 0.125]);
    }

    #[test]
    fn sweep_examples() {
        // TU of 0.1 from a near one-hot row, 3.0 from uniform over 8 classes
        let sharp = |c: usize| {
            let mut v = vec![0.0; 8];
            v[c] = 1.0;
            v
        };
        let mut records = Vec::new();
        for (i, (tu, correct)) in [(0.1, true), (0.1, true), (3.0, false), (3.0, true)].iter().enumerate() {
            let d = SoftmaxDraws::from_rows(&[if *tu < 1.0 { sharp(0) } else { vec![0.125; 8] }]).unwrap();
            let mut rec = SampleRecord::from_draws(i, if *correct { 0 } else { 1 }, &d);
            rec.total_bits = *tu;
            records.push(rec);
        }
        let report = UncertaintyReport::from_records(names(8), records).unwrap();
        let rows = entropy_threshold_sweep(&report, &[0.0, 2.0, 3.0 + 1e-6]);
        assert_eq!(rows[0].acc_confident, None);
        assert_eq!(rows[0].acc_uncertain, Some(0.75));
        assert_eq!((rows[1].acc_confident, rows[1].acc_uncertain), (Some(1.0), Some(0.5)));
        assert_eq!((rows[1].n_confident, rows[1].n_uncertain), (2, 2));
        assert_eq!((rows[2].acc_confident, rows[2].acc_uncertain), (Some(0.75), None));
        assert_eq!(report.accuracy_of_most_uncertain(0.5), 0.5);
    }

    #[test]
    fn default_grid_spans_max_entropy() {
        let g = default_thresholds(4);
        assert_eq!(g.len(), 41);
        assert_abs_diff_eq!(*g.last().unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_outputs() {
        let rows = vec![(0, vec![vec![1.0, 0.0]]), (1, vec![vec![1.0, 0.0]])];
        let r = report_from(&rows, 2);
        let mut buf = Vec::new();
        r.write_samples_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_id,true,pred,tu_bits,au_bits,eu_bits,confidence\n0,c0,c0,0,0,0,1\n1,c1,c0,0,0,0,1\n"
        );
        let mut buf = Vec::new();
        write_matrix_csv(&r.confusion, &r.class_names, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "class,c0,c1\nc0,100,0\nc1,100,0\n");
    }

    #[test]
    fn empty_report_rejected() {
        assert!(UncertaintyReport::<f64>::from_records(names(2), vec![]).is_err());
    }
}
