//! Baseband I/Q frame synthesis: constellations, pulse shaping, AWGN,
//! dataset assembly, and the "DKM1" binary dataset format.

use num_complex::Complex64;
use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Samples per frame, fixed by the 2x128 network input.
pub const FRAME_LEN: usize = 128;

/// Nominal SNRs at or above this are treated as noiseless.
pub const SNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModulationScheme {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Qam64,
}

impl ModulationScheme {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Self::Bpsk => 1,
            Self::Qpsk => 2,
            Self::Psk8 => 3,
            Self::Qam16 => 4,
            Self::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bpsk => "BPSK",
            Self::Qpsk => "QPSK",
            Self::Psk8 => "8PSK",
            Self::Qam16 => "16QAM",
            Self::Qam64 => "64QAM",
        }
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BPSK" => Ok(Self::Bpsk),
            "QPSK" => Ok(Self::Qpsk),
            "8PSK" | "PSK8" => Ok(Self::Psk8),
            "16QAM" | "QAM16" => Ok(Self::Qam16),
            "64QAM" | "QAM64" => Ok(Self::Qam64),
            other => Err(Error::Invalid(format!(
                "unknown modulation scheme {other:?}"
            ))),
        }
    }
}

fn qam_grid(levels: &[f64]) -> Vec<Complex64> {
    let unnormalized: Vec<Complex64> = levels
        .iter()
        .flat_map(|&q| levels.iter().map(move |&i| Complex64::new(i, q)))
        .collect();
    let mean_power: f64 =
        unnormalized.iter().map(|p| p.norm_sqr()).sum::<f64>() / unnormalized.len() as f64;
    let scale = mean_power.sqrt().recip();
    unnormalized.into_iter().map(|p| p * scale).collect()
}

/// Constellation points for the scheme, unit average power.
pub fn constellation(scheme: ModulationScheme) -> Vec<Complex64> {
    match scheme {
        ModulationScheme::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        ModulationScheme::Qpsk => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            vec![
                Complex64::new(a, a),
                Complex64::new(-a, a),
                Complex64::new(a, -a),
                Complex64::new(-a, -a),
            ]
        }
        ModulationScheme::Psk8 => (0..8)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * k as f64))
            .collect(),
        ModulationScheme::Qam16 => qam_grid(&[-3.0, -1.0, 1.0, 3.0]),
        ModulationScheme::Qam64 => qam_grid(&[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pulse {
    Rectangular,
    RootRaisedCosine { rolloff: f64 },
}

impl FromStr for Pulse {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("rectangular") {
            return Ok(Self::Rectangular);
        }
        if let Some(r) = s.strip_prefix("rrc:").or_else(|| s.strip_prefix("RRC:")) {
            let rolloff: f64 = r
                .parse()
                .map_err(|_| Error::Invalid(format!("bad RRC rolloff {r:?}")))?;
            if !(rolloff > 0.0 && rolloff <= 1.0) {
                return Err(Error::Invalid(format!(
                    "RRC rolloff {rolloff} not in (0, 1]"
                )));
            }
            return Ok(Self::RootRaisedCosine { rolloff });
        }
        Err(Error::Invalid(format!("unknown pulse {s:?}")))
    }
}

impl std::fmt::Display for Pulse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Rectangular => write!(f, "rectangular"),
            Self::RootRaisedCosine { rolloff } => write!(f, "rrc:{rolloff}"),
        }
    }
}

/// Root-raised-cosine taps over `span` symbols at `sps` samples per
/// symbol, normalized to unit energy.
fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let half = (n - 1) as f64 / 2.0;
    let mut taps = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i as f64 - half) / sps as f64; // time in symbols
        let v = if t.abs() < 1e-12 {
            1.0 - rolloff + 4.0 * rolloff / std::f64::consts::PI
        } else if (t.abs() - 1.0 / (4.0 * rolloff)).abs() < 1e-9 {
            let x = std::f64::consts::PI / (4.0 * rolloff);
            rolloff / 2.0_f64.sqrt()
                * ((1.0 + 2.0 / std::f64::consts::PI) * x.sin()
                    + (1.0 - 2.0 / std::f64::consts::PI) * x.cos())
        } else {
            let pi = std::f64::consts::PI;
            let num = (pi * t * (1.0 - rolloff)).sin()
                + 4.0 * rolloff * t * (pi * t * (1.0 + rolloff)).cos();
            let den = pi * t * (1.0 - (4.0 * rolloff * t).powi(2));
            num / den
        };
        taps.push(v);
    }
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let scale = energy.sqrt().recip();
    taps.iter_mut().for_each(|v| *v *= scale);
    taps
}

/// Map symbol indices to a pulse-shaped complex sample sequence of
/// length |symbols| * samples_per_symbol.
pub fn modulate(
    scheme: ModulationScheme,
    symbol_indices: &[usize],
    samples_per_symbol: usize,
    pulse: Pulse,
) -> Result<Vec<Complex64>> {
    let points = constellation(scheme);
    for &idx in symbol_indices {
        if idx >= points.len() {
            return Err(Error::InvalidSymbol {
                index: idx,
                size: points.len(),
            });
        }
    }
    let n = symbol_indices.len() * samples_per_symbol;
    match pulse {
        Pulse::Rectangular => {
            let mut out = Vec::with_capacity(n);
            for &idx in symbol_indices {
                out.extend(std::iter::repeat(points[idx]).take(samples_per_symbol));
            }
            Ok(out)
        }
        Pulse::RootRaisedCosine { rolloff } => {
            let span = 8;
            let taps = rrc_taps(rolloff, samples_per_symbol, span);
            let delay = (taps.len() - 1) / 2;
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (m, &idx) in symbol_indices.iter().enumerate() {
                let sym = points[idx];
                let center = m * samples_per_symbol;
                for (k, &h) in taps.iter().enumerate() {
                    let pos = center as isize + k as isize - delay as isize;
                    if pos >= 0 && (pos as usize) < n {
                        out[pos as usize] += sym * h;
                    }
                }
            }
            Ok(out)
        }
    }
}

fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Add complex white Gaussian noise calibrated against the empirical
/// signal power: total per-sample noise variance P / 10^(snr/10),
/// split evenly between the real and imaginary parts.
pub fn add_awgn(clean: &[Complex64], snr_db: f64, rng: &mut impl Rng) -> Result<Vec<Complex64>> {
    let p = mean_power(clean);
    if clean.is_empty() || p <= 0.0 {
        return Err(Error::ZeroPower);
    }
    if snr_db >= SNR_CAP_DB {
        return Ok(clean.to_vec());
    }
    let sigma_sq = p / 10f64.powf(snr_db / 10.0);
    let per_component = Normal::new(0.0, (sigma_sq / 2.0).sqrt()).expect("valid std");
    Ok(clean
        .iter()
        .map(|&s| s + Complex64::new(per_component.sample(rng), per_component.sample(rng)))
        .collect())
}

/// 10 log10(P_clean / P_noise) with noise = noisy - clean.
pub fn measure_snr(clean: &[Complex64], noisy: &[Complex64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![clean.len()],
            found: vec![noisy.len()],
        });
    }
    let p_clean = mean_power(clean);
    let p_noise = clean
        .iter()
        .zip(noisy)
        .map(|(&c, &n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::InfiniteSnr);
    }
    Ok(10.0 * (p_clean / p_noise).log10())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub snr_grid_db: Vec<i32>,
    pub frames_per_class_per_snr: usize,
    pub samples_per_symbol: usize,
    pub pulse: Pulse,
    pub rng_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: (-20..=18).step_by(2).collect(),
            frames_per_class_per_snr: 100,
            samples_per_symbol: 8,
            pulse: Pulse::Rectangular,
            rng_seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidConfig("snr grid is empty".into()));
        }
        if !self.snr_grid_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "snr grid not strictly increasing".into(),
            ));
        }
        if self.frames_per_class_per_snr == 0 {
            return Err(Error::InvalidConfig(
                "frames_per_class_per_snr must be positive".into(),
            ));
        }
        if self.samples_per_symbol == 0 || FRAME_LEN % self.samples_per_symbol != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame length {FRAME_LEN} not divisible by samples_per_symbol {}",
                self.samples_per_symbol
            )));
        }
        Ok(())
    }
}

/// One 2xN real I/Q matrix with its class label and SNR tag.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame {
    pub i: Vec<f32>,
    pub q: Vec<f32>,
    pub label: usize,
    pub snr_db: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<IQFrame>,
    pub class_names: Vec<String>,
    pub frame_length: usize,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Per-frame generator: mixes the dataset seed with the global frame
/// index so synthesis order cannot affect the result.
fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ frame_index.wrapping_mul(0xA24BAED4963EE407),
    ))
}

pub fn synthesize_frame(
    scheme: ModulationScheme,
    label: usize,
    snr_db: i32,
    config: &ChannelConfig,
    frame_index: u64,
) -> Result<IQFrame> {
    let mut rng = frame_rng(config.rng_seed, frame_index);
    let size = 1usize << scheme.bits_per_symbol();
    let num_symbols = FRAME_LEN / config.samples_per_symbol;
    let indices: Vec<usize> = (0..num_symbols).map(|_| rng.gen_range(0..size)).collect();
    let clean = modulate(scheme, &indices, config.samples_per_symbol, config.pulse)?;
    let noisy = add_awgn(&clean, snr_db as f64, &mut rng)?;
    Ok(IQFrame {
        i: noisy.iter().map(|s| s.re as f32).collect(),
        q: noisy.iter().map(|s| s.im as f32).collect(),
        label,
        snr_db: snr_db as i8,
    })
}

/// K x |snr_grid| x frames_per_class_per_snr labeled frames, exactly
/// balanced per (class, snr) cell and deterministic per seed.
pub fn synthesize_dataset(config: &ChannelConfig, schemes: &[ModulationScheme]) -> Result<Dataset> {
    config.validate()?;
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("no modulation schemes given".into()));
    }
    let mut frames = Vec::with_capacity(
        schemes.len() * config.snr_grid_db.len() * config.frames_per_class_per_snr,
    );
    let mut frame_index = 0u64;
    for (label, &scheme) in schemes.iter().enumerate() {
        for &snr in &config.snr_grid_db {
            for _ in 0..config.frames_per_class_per_snr {
                frames.push(synthesize_frame(scheme, label, snr, config, frame_index)?);
                frame_index += 1;
            }
        }
    }
    Ok(Dataset {
        frames,
        class_names: schemes.iter().map(|s| s.name().to_string()).collect(),
        frame_length: FRAME_LEN,
    })
}

pub const DATASET_MAGIC: [u8; 4] = *b"DKM1";
pub const DATASET_VERSION: u8 = 1;

/// "DKM1" little-endian dataset format: magic, version u8, K u8, N u16,
/// frame_count u32, K class-name records (len u8 + UTF-8), then frame
/// records: label u8, snr_db i8, N f32 I samples, N f32 Q samples.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&[DATASET_VERSION])?;
    w.write_all(&[dataset.class_names.len() as u8])?;
    w.write_all(&(dataset.frame_length as u16).to_le_bytes())?;
    w.write_all(&(dataset.frames.len() as u32).to_le_bytes())?;
    for name in &dataset.class_names {
        w.write_all(&[name.len() as u8])?;
        w.write_all(name.as_bytes())?;
    }
    for frame in &dataset.frames {
        w.write_all(&[frame.label as u8])?;
        w.write_all(&frame.snr_db.to_le_bytes())?;
        for &v in &frame.i {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &frame.q {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let mut head = [0u8; 1];
    r.read_exact(&mut head)?;
    if head[0] != DATASET_VERSION {
        return Err(Error::UnknownVersion(head[0]));
    }
    r.read_exact(&mut head)?;
    let k = head[0] as usize;
    let mut n16 = [0u8; 2];
    r.read_exact(&mut n16)?;
    let n = u16::from_le_bytes(n16) as usize;
    let mut cnt = [0u8; 4];
    r.read_exact(&mut cnt)?;
    let frame_count = u32::from_le_bytes(cnt) as usize;
    let mut class_names = Vec::with_capacity(k);
    for _ in 0..k {
        r.read_exact(&mut head)?;
        let mut name = vec![0u8; head[0] as usize];
        r.read_exact(&mut name)?;
        class_names.push(
            String::from_utf8(name).map_err(|_| Error::Invalid("non-UTF-8 class name".into()))?,
        );
    }
    let mut frames = Vec::with_capacity(frame_count);
    for frame_index in 0..frame_count {
        let frame = read_frame(&mut r, n, k).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Truncated { frame_index }
            }
            other => other,
        })?;
        frames.push(frame);
    }
    Ok(Dataset {
        frames,
        class_names,
        frame_length: n,
    })
}

fn read_frame(r: &mut impl Read, n: usize, k: usize) -> Result<IQFrame> {
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    let label = head[0] as usize;
    if label >= k {
        return Err(Error::Invalid(format!("frame label {label} >= K {k}")));
    }
    let snr_db = head[1] as i8;
    let read_row = |r: &mut dyn Read| -> std::io::Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let i = read_row(r)?;
    let q = read_row(r)?;
    Ok(IQFrame {
        i,
        q,
        label,
        snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModulationScheme::*;

    #[test]
    fn constellations_unit_power_and_distinct() {
        for scheme in [Bpsk, Qpsk, Psk8, Qam16, Qam64] {
            let pts = constellation(scheme);
            assert_eq!(pts.len(), 1 << scheme.bits_per_symbol());
            let p = pts.iter().map(|s| s.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((p - 1.0).abs() < 1e-6, "{scheme:?} mean power {p}");
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    assert!((pts[a] - pts[b]).norm() > 1e-9);
                }
            }
        }
    }

    #[test]
    fn bpsk_is_antipodal_pair() {
        let pts = constellation(Bpsk);
        assert_eq!(
            pts,
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]
        );
    }

    #[test]
    fn qam16_grid_scaled_by_sqrt10() {
        // oracle: mean |s|^2 over the unscaled 16 points is 10
        let levels = [-3.0f64, -1.0, 1.0, 3.0];
        let mut unscaled = 0.0;
        for &a in &levels {
            for &b in &levels {
                unscaled += a * a + b * b;
            }
        }
        assert!((unscaled / 16.0 - 10.0).abs() < 1e-12);
        let pts = constellation(Qam16);
        let p = pts.iter().map(|s| s.norm_sqr()).sum::<f64>() / 16.0;
        assert!((p - 1.0).abs() < 1e-6);
        // corner point is (3+3j)/sqrt(10)
        let corner = pts.iter().map(|p| p.norm()).fold(0.0f64, f64::max);
        assert!((corner - (18.0f64 / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rectangular_modulate_replicates_symbols() {
        let out = modulate(Bpsk, &[0, 1], 2, Pulse::Rectangular).unwrap();
        let expect = [1.0, 1.0, -1.0, -1.0];
        assert_eq!(out.len(), 4);
        for (o, e) in out.iter().zip(expect) {
            assert_eq!(o.re, e);
            assert_eq!(o.im, 0.0);
        }
        let one = modulate(Qpsk, &[0], 1, Pulse::Rectangular).unwrap();
        assert!((one[0] - Complex64::new(1.0, 1.0) / 2.0f64.sqrt()).norm() < 1e-12);
    }

    #[test]
    fn qam16_all_points_mean_power_one() {
        let indices: Vec<usize> = (0..16).collect();
        let out = modulate(Qam16, &indices, 1, Pulse::Rectangular).unwrap();
        let p = out.iter().map(|s| s.norm_sqr()).sum::<f64>() / out.len() as f64;
        assert!((p - 1.0).abs() < 1e-6);
    }

    #[test]
    fn modulate_rejects_out_of_range_symbol() {
        assert!(matches!(
            modulate(Bpsk, &[2], 1, Pulse::Rectangular),
            Err(Error::InvalidSymbol { index: 2, size: 2 })
        ));
    }

    #[test]
    fn rrc_output_length_and_finite() {
        let out = modulate(
            Qpsk,
            &[0, 1, 2, 3, 0, 1, 2, 3],
            8,
            Pulse::RootRaisedCosine { rolloff: 0.35 },
        )
        .unwrap();
        assert_eq!(out.len(), 64);
        assert!(out.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        assert!(out.iter().map(|s| s.norm_sqr()).sum::<f64>() > 0.0);
    }

    #[test]
    fn rrc_taps_unit_energy() {
        let taps = rrc_taps(0.35, 8, 8);
        let e: f64 = taps.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn awgn_zero_snr_noise_power_equals_signal_power() {
        let clean: Vec<Complex64> = (0..10_000).map(|_| Complex64::new(1.0, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = add_awgn(&clean, 0.0, &mut rng).unwrap();
        let snr = measure_snr(&clean, &noisy).unwrap();
        assert!(snr.abs() < 0.3, "measured {snr} dB at nominal 0 dB");
    }

    #[test]
    fn awgn_cap_returns_clean() {
        let clean: Vec<Complex64> = (0..8)
            .map(|i| Complex64::new(i as f64 + 1.0, 0.5))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = add_awgn(&clean, 120.0, &mut rng).unwrap();
        for (a, b) in out.iter().zip(&clean) {
            assert!((a - b).norm() < 1e-4);
        }
    }

    #[test]
    fn awgn_rejects_zero_power() {
        let clean = vec![Complex64::new(0.0, 0.0); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            add_awgn(&clean, 10.0, &mut rng),
            Err(Error::ZeroPower)
        ));
    }

    #[test]
    fn awgn_roundtrip_10db_within_tolerance() {
        let clean: Vec<Complex64> = (0..10_000)
            .map(|i| Complex64::from_polar(1.0, i as f64))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy = add_awgn(&clean, 10.0, &mut rng).unwrap();
        let snr = measure_snr(&clean, &noisy).unwrap();
        assert!((snr - 10.0).abs() < 0.3, "measured {snr}");
    }

    #[test]
    fn measure_snr_analytic_cases() {
        let clean = vec![Complex64::new(1.0, 0.0); 4];
        let noisy: Vec<Complex64> = clean.iter().map(|c| c + Complex64::new(0.0, 1.0)).collect();
        assert!(measure_snr(&clean, &noisy).unwrap().abs() < 1e-12);
        let noisy2: Vec<Complex64> = clean.iter().map(|c| c + Complex64::new(0.1, 0.0)).collect();
        assert!((measure_snr(&clean, &noisy2).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(
            measure_snr(&clean, &clean),
            Err(Error::InfiniteSnr)
        ));
    }

    fn small_config() -> ChannelConfig {
        ChannelConfig {
            snr_grid_db: vec![-10, 0, 10],
            frames_per_class_per_snr: 10,
            samples_per_symbol: 8,
            pulse: Pulse::Rectangular,
            rng_seed: 42,
        }
    }

    #[test]
    fn dataset_counts_and_balance() {
        let schemes = [Bpsk, Qpsk, Qam16, Qam64];
        let ds = synthesize_dataset(&small_config(), &schemes).unwrap();
        assert_eq!(ds.frames.len(), 120);
        for label in 0..4 {
            for &snr in &[-10i8, 0, 10] {
                let n = ds
                    .frames
                    .iter()
                    .filter(|f| f.label == label && f.snr_db == snr)
                    .count();
                assert_eq!(n, 10);
            }
        }
    }

    #[test]
    fn dataset_deterministic_per_seed() {
        let schemes = [Bpsk, Qam64];
        let a = synthesize_dataset(&small_config(), &schemes).unwrap();
        let b = synthesize_dataset(&small_config(), &schemes).unwrap();
        assert_eq!(a, b);
        let mut other = small_config();
        other.rng_seed = 43;
        let c = synthesize_dataset(&other, &schemes).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small_config();
        c.snr_grid_db = vec![0, 0];
        assert!(synthesize_dataset(&c, &[Bpsk]).is_err());
        let mut c = small_config();
        c.samples_per_symbol = 7; // 128 % 7 != 0
        assert!(synthesize_dataset(&c, &[Bpsk]).is_err());
        let mut c = small_config();
        c.snr_grid_db.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn dataset_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.dkm");
        let ds = synthesize_dataset(&small_config(), &[Bpsk, Qpsk, Qam16, Qam64]).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn dataset_corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.dkm");
        let ds = synthesize_dataset(&small_config(), &[Bpsk, Qpsk]).unwrap();
        save_dataset(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::BadMagic { .. })));

        let mut v9 = bytes.clone();
        v9[4] = 9;
        std::fs::write(&path, &v9).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::UnknownVersion(9))));

        // cut mid-way through the second frame
        let header = 4 + 1 + 1 + 2 + 4 + (1 + 4) + (1 + 4);
        let frame_bytes = 2 + 128 * 8;
        std::fs::write(&path, &bytes[..header + frame_bytes + 10]).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Truncated { frame_index: 1 })
        ));
    }

    #[test]
    fn per_bin_measured_snr_tracks_nominal() {
        // statistical oracle: regenerate clean frames and compare
        let config = ChannelConfig {
            snr_grid_db: vec![0, 10],
            frames_per_class_per_snr: 50,
            ..small_config()
        };
        let schemes = [Qpsk];
        let ds = synthesize_dataset(&config, &schemes).unwrap();
        for &snr in &config.snr_grid_db {
            let mut total = 0.0;
            let mut count = 0;
            for (idx, frame) in ds.frames.iter().enumerate() {
                if frame.snr_db != snr as i8 {
                    continue;
                }
                // rebuild the clean frame from the same per-frame rng
                let mut rng = frame_rng(config.rng_seed, idx as u64);
                let num_symbols = FRAME_LEN / config.samples_per_symbol;
                let indices: Vec<usize> = (0..num_symbols).map(|_| rng.gen_range(0..4)).collect();
                let clean =
                    modulate(Qpsk, &indices, config.samples_per_symbol, config.pulse).unwrap();
                let noisy: Vec<Complex64> = frame
                    .i
                    .iter()
                    .zip(&frame.q)
                    .map(|(&i, &q)| Complex64::new(i as f64, q as f64))
                    .collect();
                total += measure_snr(&clean, &noisy).unwrap();
                count += 1;
            }
            let mean = total / count as f64;
            assert!((mean - snr as f64).abs() < 0.5, "bin {snr}: mean {mean}");
        }
    }
}
