//! Result artifacts: accuracy-vs-SNR curves, confusion matrices, loss
//! CSVs, and a PCA 2-D feature scatter, exported as CSV plus minimal
//! hand-emitted SVG plots. CSVs are the source of truth; all exports
//! are byte-deterministic for identical inputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::attributes::ClassAttributeMatrix;
use crate::error::{Error, Result};
use crate::models::{class_prototypes, TransformNet, VisualModel};
use crate::nn::{Scalar, Tensor};
use crate::signal::{Dataset, IQFrame};
use crate::training::{frames_to_tensor, nearest_prototypes, TrainReport};

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<usize>,
    pub snr_filter: Option<i8>,
}

impl ConfusionMatrix {
    pub fn new(k: usize, snr_filter: Option<i8>) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
            snr_filter,
        }
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.k + predicted] += 1;
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.k + predicted]
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn row_total(&self, true_class: usize) -> usize {
        self.counts[true_class * self.k..(true_class + 1) * self.k]
            .iter()
            .sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.k).map(|i| self.count(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total().max(1) as f64
    }

    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\pred");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, name) in class_names.iter().enumerate() {
            out.push_str(name);
            for p in 0..self.k {
                let _ = write!(out, ",{}", self.count(t, p));
            }
            out.push('\n');
        }
        out
    }
}

/// Symmetric confusion rate between two classes:
/// (counts[a][b] + counts[b][a]) / (row_a_total + row_b_total).
pub fn confusion_pair_rate(cm: &ConfusionMatrix, a: usize, b: usize) -> Result<f64> {
    if a == b {
        return Err(Error::Invalid(
            "pair rate needs two distinct classes".into(),
        ));
    }
    let denom = cm.row_total(a) + cm.row_total(b);
    if denom == 0 {
        return Err(Error::Invalid("empty confusion rows".into()));
    }
    Ok((cm.count(a, b) + cm.count(b, a)) as f64 / denom as f64)
}

/// Pair confusion rates side by side, one column per classifier:
/// header `pair,<name>,...`, rows `A/B,<rate>,...`.
pub fn pair_rates_csv(
    pairs: &[(usize, usize)],
    tagged: &[(&str, &ConfusionMatrix)],
    class_names: &[String],
) -> Result<String> {
    let mut out = String::from("pair");
    for (name, _) in tagged {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for &(a, b) in pairs {
        out.push_str(&format!("{}/{}", class_names[a], class_names[b]));
        for (_, cm) in tagged {
            out.push_str(&format!(",{:.6}", confusion_pair_rate(cm, a, b)?));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyPoint {
    pub snr_db: i8,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub classifier: String,
    pub points: Vec<AccuracyPoint>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub curve: AccuracyCurve,
    pub overall: ConfusionMatrix,
    pub per_snr: Vec<ConfusionMatrix>,
}

/// Classify every test frame once and aggregate per-SNR-bin accuracy
/// plus overall and per-bin confusion matrices.
pub fn evaluate(
    classifier_name: &str,
    test: &Dataset,
    mut classify: impl FnMut(&[&IQFrame]) -> Result<Vec<usize>>,
) -> Result<EvalOutcome> {
    if test.frames.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    let k = test.num_classes();
    let mut bins: Vec<i8> = test.frames.iter().map(|f| f.snr_db).collect();
    bins.sort_unstable();
    bins.dedup();
    let mut overall = ConfusionMatrix::new(k, None);
    let mut per_snr: Vec<ConfusionMatrix> = bins
        .iter()
        .map(|&snr| ConfusionMatrix::new(k, Some(snr)))
        .collect();
    let frames: Vec<&IQFrame> = test.frames.iter().collect();
    for chunk in frames.chunks(256) {
        let preds = classify(chunk)?;
        if preds.len() != chunk.len() {
            return Err(Error::Invalid("classifier returned wrong count".into()));
        }
        for (frame, &pred) in chunk.iter().zip(&preds) {
            overall.record(frame.label, pred);
            let bin = bins.binary_search(&frame.snr_db).unwrap();
            per_snr[bin].record(frame.label, pred);
        }
    }
    let points = per_snr
        .iter()
        .map(|cm| AccuracyPoint {
            snr_db: cm.snr_filter.unwrap(),
            accuracy: cm.accuracy(),
            n: cm.total(),
        })
        .collect();
    Ok(EvalOutcome {
        curve: AccuracyCurve {
            classifier: classifier_name.to_string(),
            points,
        },
        overall,
        per_snr,
    })
}

/// Nearest-prototype classifier closure over frozen models.
pub fn dual_driven_classifier<'a>(
    visual: &'a VisualModel<f32>,
    tnet: &TransformNet<f32>,
    cam: &ClassAttributeMatrix,
    frame_len: usize,
) -> Result<impl FnMut(&[&IQFrame]) -> Result<Vec<usize>> + 'a> {
    let prototypes = class_prototypes::<f32>(tnet, cam)?;
    Ok(move |frames: &[&IQFrame]| {
        let x = frames_to_tensor::<f32>(frames, frame_len);
        let (feats, _) = visual.forward_eval(&x)?;
        Ok(nearest_prototypes(&feats, &prototypes))
    })
}

/// Softmax-head argmax baseline closure.
pub fn baseline_classifier(
    visual: &VisualModel<f32>,
    frame_len: usize,
) -> impl FnMut(&[&IQFrame]) -> Result<Vec<usize>> + '_ {
    move |frames: &[&IQFrame]| {
        let x = frames_to_tensor::<f32>(frames, frame_len);
        let (_, logits) = visual.forward_eval(&x)?;
        let k = visual.num_classes;
        Ok((0..frames.len())
            .map(|b| {
                let row = &logits.data()[b * k..(b + 1) * k];
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMap {
    pub points: Vec<(f64, f64, usize)>,
    pub explained_variance: [f64; 2],
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues in descending order with their eigenvectors (row i of
/// the returned matrix is the i-th eigenvector), sign-fixed so the
/// largest-magnitude component of each vector is positive.
pub fn jacobi_eigen(matrix: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), d * d);
    let mut a = matrix.to_vec();
    // v starts as identity; accumulates rotations column-wise
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = matrix.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off < 1e-9 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = 0.5 * (2.0 * apq).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                for i in 0..d {
                    let aip = a[i * d + p];
                    let aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[p * d + i];
                    let aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].partial_cmp(&a[i * d + i]).unwrap());
    let mut vals = Vec::with_capacity(d);
    let mut vecs = vec![0.0; d * d];
    for (rank, &col) in order.iter().enumerate() {
        vals.push(a[col * d + col]);
        let mut vec_i: Vec<f64> = (0..d).map(|i| v[i * d + col]).collect();
        let mut best = 0usize;
        for (i, x) in vec_i.iter().enumerate() {
            if x.abs() > vec_i[best].abs() {
                best = i;
            }
        }
        if vec_i[best] < 0.0 {
            vec_i.iter_mut().for_each(|x| *x = -*x);
        }
        vecs[rank * d..(rank + 1) * d].copy_from_slice(&vec_i);
    }
    (vals, vecs)
}

/// PCA projection of features [B, D] onto the top-2 principal axes.
pub fn pca_2d<F: Scalar>(features: &Tensor<F>, labels: &[usize]) -> Result<ScatterMap> {
    let sh = features.shape();
    if sh.len() != 2 || sh[0] < 3 {
        return Err(Error::Invalid(format!(
            "pca needs a [B>=3, D] feature matrix, got {sh:?}"
        )));
    }
    let (b, d) = (sh[0], sh[1]);
    if labels.len() != b {
        return Err(Error::Invalid("label count mismatch".into()));
    }
    let x: Vec<f64> = features
        .data()
        .iter()
        .map(|&v| num_traits::cast::<F, f64>(v).unwrap())
        .collect();
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let centered: Vec<f64> = x
        .chunks(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(&v, &m)| v - m))
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks(d) {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += ri * row[j];
            }
        }
    }
    let denom = (b - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov, d);
    let axes = [&vecs[0..d], &vecs[d..2 * d]];
    let points = centered
        .chunks(d)
        .zip(labels)
        .map(|(row, &label)| {
            let px: f64 = row.iter().zip(axes[0]).map(|(a, b)| a * b).sum();
            let py: f64 = row.iter().zip(axes[1]).map(|(a, b)| a * b).sum();
            (px, py, label)
        })
        .collect();
    Ok(ScatterMap {
        points,
        explained_variance: [
            vals[0].max(0.0),
            vals.get(1).copied().unwrap_or(0.0).max(0.0),
        ],
    })
}

// ---------------------------------------------------------------------------
// Export

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn accuracy_csv(curves: &[AccuracyCurve]) -> String {
    let mut out = String::from("classifier,snr_db,n,accuracy\n");
    for curve in curves {
        for p in &curve.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                curve.classifier,
                p.snr_db,
                p.n,
                fmt6(p.accuracy)
            );
        }
    }
    out
}

pub fn scatter_csv(scatter: &ScatterMap) -> String {
    let mut out = String::from("x,y,class\n");
    for &(x, y, class) in &scatter.points {
        let _ = writeln!(out, "{},{},{class}", fmt6(x), fmt6(y));
    }
    out
}

pub fn losses_csv(reports: &[TrainReport]) -> String {
    let mut out = String::from("stage,epoch,loss,seconds\n");
    for r in reports {
        for e in &r.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.stage,
                e.epoch,
                fmt6(e.train_loss),
                e.seconds
            );
        }
    }
    out
}

fn svg_header(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Line plot of accuracy vs SNR, one polyline per classifier.
pub fn accuracy_svg(curves: &[AccuracyCurve]) -> String {
    let (w, h, ml, mb) = (640u32, 440u32, 60.0, 50.0);
    let (pw, ph) = (f64::from(w) - ml - 20.0, f64::from(h) - mb - 20.0);
    let snrs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| f64::from(p.snr_db)))
        .collect();
    let (lo, hi) = snrs
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1.0);
    let mut out = svg_header(w, h);
    let _ = writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>",
        y = 20.0 + ph,
        x2 = ml + pw
    );
    let _ = writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"20\" x2=\"{ml}\" y2=\"{y2}\" stroke=\"black\"/>",
        y2 = 20.0 + ph
    );
    for (ci, curve) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| {
                let x = ml + (f64::from(p.snr_db) - lo) / span * pw;
                let y = 20.0 + (1.0 - p.accuracy) * ph;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = PALETTE[ci % PALETTE.len()];
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" fill=\"{color}\" font-size=\"14\">{}</text>",
            curve.classifier,
            x = ml + 10.0,
            y = 40.0 + 18.0 * ci as f64
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x}\" y=\"{y}\" font-size=\"14\">SNR (dB)</text>",
        x = ml + pw / 2.0 - 30.0,
        y = f64::from(h) - 10.0
    );
    out.push_str("</svg>\n");
    out
}

/// Heatmap of a row-normalized confusion matrix.
pub fn confusion_svg(cm: &ConfusionMatrix, class_names: &[String]) -> String {
    let k = cm.num_classes();
    let cell = 60.0;
    let m = 80.0;
    let size = (m + cell * k as f64 + 20.0) as u32;
    let mut out = svg_header(size, size);
    for t in 0..k {
        let row_total = cm.row_total(t).max(1);
        for p in 0..k {
            let rate = cm.count(t, p) as f64 / row_total as f64;
            let shade = (255.0 - rate * 200.0) as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"gray\"/>",
                x = m + cell * p as f64,
                y = m + cell * t as f64
            );
            let _ = writeln!(
                out,
                "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
                fmt6(rate),
                x = m + cell * (p as f64 + 0.5),
                y = m + cell * (t as f64 + 0.55)
            );
        }
    }
    for (i, name) in class_names.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">{name}</text>",
            x = m + cell * (i as f64 + 0.5),
            y = m - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y:.1}\" font-size=\"12\" text-anchor=\"end\">{name}</text>",
            x = m - 8.0,
            y = m + cell * (i as f64 + 0.55)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter plot of the PCA projection, colored by class.
pub fn scatter_svg(scatter: &ScatterMap, class_names: &[String]) -> String {
    let (w, h) = (520u32, 520u32);
    let m = 40.0;
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y, _) in &scatter.points {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let xs = (xhi - xlo).max(1e-9);
    let ys = (yhi - ylo).max(1e-9);
    let span = f64::from(w) - 2.0 * m;
    let mut out = svg_header(w, h);
    for &(x, y, class) in &scatter.points {
        let px = m + (x - xlo) / xs * span;
        let py = m + (1.0 - (y - ylo) / ys) * span;
        let _ = writeln!(
            out,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.6\"/>",
            PALETTE[class % PALETTE.len()]
        );
    }
    for (i, name) in class_names.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" fill=\"{}\" font-size=\"13\">{name}</text>",
            PALETTE[i % PALETTE.len()],
            x = 10,
            y = 20 + 16 * i
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Line plot of per-stage training loss over epochs.
pub fn losses_svg(reports: &[TrainReport]) -> String {
    let (w, h, ml) = (640u32, 440u32, 60.0);
    let (pw, ph) = (f64::from(w) - ml - 20.0, f64::from(h) - 70.0);
    let max_loss = reports
        .iter()
        .flat_map(|r| r.epochs.iter().map(|e| e.train_loss))
        .fold(1e-12, f64::max);
    let max_epoch = reports
        .iter()
        .map(|r| r.epochs.len())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut out = svg_header(w, h);
    for (ri, r) in reports.iter().enumerate() {
        let pts: Vec<String> = r
            .epochs
            .iter()
            .map(|e| {
                let x = ml + (e.epoch as f64 - 1.0) / (max_epoch - 1.0).max(1.0) * pw;
                let y = 20.0 + (1.0 - e.train_loss / max_loss) * ph;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = PALETTE[ri % PALETTE.len()];
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" fill=\"{color}\" font-size=\"14\">{}</text>",
            r.stage,
            x = ml + 10.0,
            y = 40.0 + 18.0 * ri as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Write the full report bundle. Deterministic: identical inputs give
/// identical bytes.
pub fn export_report(
    out_dir: &Path,
    curves: &[AccuracyCurve],
    matrices: &[(String, ConfusionMatrix)],
    scatter: Option<&ScatterMap>,
    losses: &[TrainReport],
    class_names: &[String],
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("accuracy.csv"), accuracy_csv(curves))?;
    std::fs::write(out_dir.join("accuracy.svg"), accuracy_svg(curves))?;
    for (tag, cm) in matrices {
        std::fs::write(
            out_dir.join(format!("confusion_{tag}.csv")),
            cm.to_csv(class_names),
        )?;
        std::fs::write(
            out_dir.join(format!("confusion_{tag}.svg")),
            confusion_svg(cm, class_names),
        )?;
    }
    if let Some(map) = scatter {
        std::fs::write(out_dir.join("scatter.csv"), scatter_csv(map))?;
        std::fs::write(out_dir.join("scatter.svg"), scatter_svg(map, class_names))?;
    }
    if !losses.is_empty() {
        std::fs::write(out_dir.join("losses.csv"), losses_csv(losses))?;
        std::fs::write(out_dir.join("losses.svg"), losses_svg(losses))?;
    }
    Ok(())
}
