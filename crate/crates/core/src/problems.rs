//! Problem generators, the additive white Gaussian noise model and
//! reconstruction metrics.
//!
//! All random draws come from ChaCha20 seeded with a 64-bit seed. Each kind of
//! draw uses its own stream of that generator, so changing, say, the noise
//! seed never perturbs the matrix or the signal:
//!
//! | stream | draw |
//! |---|---|
//! | 0 | sensing matrix entries |
//! | 1 | support of the sparse signal |
//! | 2 | signal amplitudes |
//! | 3 | noise |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, invalid, Error, Result};
use crate::io::{self, BlurRecord};
use crate::linops::{DenseMatrix, KroneckerBlur, LinearOperator, Operator};
use crate::vecops::{dist2, norm1, norm2, norm2_sq};

pub const STREAM_MATRIX: u64 = 0;
pub const STREAM_SUPPORT: u64 = 1;
pub const STREAM_AMPLITUDE: u64 = 2;
pub const STREAM_NOISE: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Operator, exact and noisy data, and (when known) the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub op: Operator,
    pub y_true: Vec<f64>,
    pub y_delta: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    /// Realized `‖y_true − y_delta‖₂`.
    pub delta: f64,
    /// Generator seed (zero for deterministic instances).
    pub seed: u64,
    /// Noise level in dB; `+∞` for noise-free data.
    pub snr_db: f64,
}

impl ProblemInstance {
    /// Wraps noise-free data `y = A x_true`.
    pub fn noise_free(op: Operator, x_true: Vec<f64>, seed: u64) -> Result<Self> {
        let y_true = op.apply(&x_true)?;
        Ok(Self {
            op,
            y_delta: y_true.clone(),
            y_true,
            x_true: Some(x_true),
            delta: 0.0,
            seed,
            snr_db: f64::INFINITY,
        })
    }

    /// `‖x_true‖₁²`, the squared radius that the true signal lies on.
    pub fn true_radius_sq(&self) -> Option<f64> {
        self.x_true.as_deref().map(|x| norm1(x).powi(2))
    }
}

/// Reference power of the noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePower {
    /// The signal is taken to have unit power (0 dBW): the noise variance is
    /// `10^(−snr_db/10)` regardless of the data.
    #[default]
    Unit,
    /// The signal power is measured as the mean square of `y_true`.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Signal-to-noise ratio in dB; `+∞` means no noise.
    pub snr_db: f64,
    pub seed: u64,
    pub power: NoisePower,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            power: NoisePower::default(),
        }
    }

    pub fn measured(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            power: NoisePower::Measured,
        }
    }
}

/// Distribution of the nonzero entries of the sparse signal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Amplitude {
    /// Normal with standard deviation `1/(scale·√s)`, which gives the
    /// measurements unit expected power per entry (`scale = 0` uses 1).
    #[default]
    UnitMeasurementPower,
    /// Normal with the given standard deviation.
    Fixed(f64),
}

/// Compressive-sensing instance shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsSpec {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    /// Multiplier applied to the standard normal matrix.
    pub scale: f64,
    pub amplitude: Amplitude,
}

impl Default for CsSpec {
    fn default() -> Self {
        Self {
            n: 200,
            m: 80,
            s: 16,
            scale: 0.04,
            amplitude: Amplitude::default(),
        }
    }
}

impl CsSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.s && self.s <= self.m && self.m <= self.n) {
            return Err(invalid(
                "n/m/s",
                format!("need 0 < s <= m <= n, got n={} m={} s={}", self.n, self.m, self.s),
            ));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(invalid("scale", format!("must be nonnegative, got {}", self.scale)));
        }
        if let Amplitude::Fixed(sd) = self.amplitude {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(invalid("amplitude", format!("must be positive, got {sd}")));
            }
        }
        Ok(())
    }

    pub fn amplitude_sd(&self) -> f64 {
        match self.amplitude {
            Amplitude::Fixed(sd) => sd,
            Amplitude::UnitMeasurementPower => {
                let scale = if self.scale > 0.0 { self.scale } else { 1.0 };
                1.0 / (scale * (self.s as f64).sqrt())
            }
        }
    }
}

/// Noise-free CS instance: `A = scale·G` with `G` standard normal `m × n`,
/// an `s`-sparse `x_true` on a uniformly drawn support, and `y = A x_true`.
pub fn gen_cs_instance(n: usize, m: usize, s: usize, scale: f64, seed: u64) -> Result<ProblemInstance> {
    gen_cs_instance_with(
        &CsSpec {
            n,
            m,
            s,
            scale,
            amplitude: Amplitude::default(),
        },
        seed,
    )
}

pub fn gen_cs_instance_with(spec: &CsSpec, seed: u64) -> Result<ProblemInstance> {
    spec.validate()?;
    let CsSpec { n, m, s, scale, .. } = *spec;
    let mut rng = rng_for(seed, STREAM_MATRIX);
    let g: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a = if scale > 0.0 {
        DenseMatrix::new(m, n, g, scale)?
    } else {
        DenseMatrix::new(m, n, vec![0.0; m * n], 1.0)?
    };

    let mut support: Vec<usize> = sample(&mut rng_for(seed, STREAM_SUPPORT), n, s).into_vec();
    support.sort_unstable();
    let sd = spec.amplitude_sd();
    let mut rng = rng_for(seed, STREAM_AMPLITUDE);
    let mut x = vec![0.0; n];
    for &i in &support {
        // A normal draw is zero with probability zero; redraw to keep
        // exactly s nonzeros.
        let v = loop {
            let v: f64 = StandardNormal.sample(&mut rng);
            if v != 0.0 {
                break v;
            }
        };
        x[i] = sd * v;
    }
    ProblemInstance::noise_free(a.into(), x, seed)
}

/// Synthetic `n × n` test image (column-major), sparse on a zero background:
/// three rectangles of heights 1, 2 and 1.5 and four point sources of
/// height 4, placed at fixed fractions of the side length.
pub fn synthetic_blur_image(n: usize) -> Vec<f64> {
    let r = |f: f64| ((f * n as f64).round() as usize).min(n);
    let mut x = vec![0.0; n * n];
    let mut fill = |r0: usize, r1: usize, c0: usize, c1: usize, v: f64| {
        for j in c0..c1.min(n) {
            for i in r0..r1.min(n) {
                x[i + j * n] = v;
            }
        }
    };
    fill(r(0.125), r(0.375), r(0.25), r(0.75), 1.0);
    fill(r(0.1875), r(0.3125), r(0.375), r(0.625), 2.0);
    fill(r(0.5), r(0.875), r(0.125), r(0.25), 1.5);
    for (fi, fj) in [(0.625, 0.5), (0.75, 0.75), (0.5625, 0.875), (0.875, 0.625)] {
        let (i, j) = (r(fi).min(n - 1), r(fj).min(n - 1));
        x[i + j * n] = 4.0;
    }
    x
}

/// Noise-free deblurring instance with the synthetic test image.
pub fn gen_blur_instance(n: usize, band: usize, sigma: f64) -> Result<ProblemInstance> {
    let op = KroneckerBlur::new(n, band, sigma)?;
    ProblemInstance::noise_free(op.into(), synthetic_blur_image(n), 0)
}

/// Noise-free deblurring instance with a caller-supplied column-major image.
pub fn gen_blur_instance_with_image(
    n: usize,
    band: usize,
    sigma: f64,
    image: Vec<f64>,
) -> Result<ProblemInstance> {
    let op = KroneckerBlur::new(n, band, sigma)?;
    check_len("blur image", n * n, image.len())?;
    if !image.iter().all(|v| v.is_finite()) {
        return Err(invalid("image", "pixels must be finite"));
    }
    ProblemInstance::noise_free(op.into(), image, 0)
}

/// Adds white Gaussian noise at `spec.snr_db` and records the realized `δ`.
pub fn add_awgn(inst: &ProblemInstance, spec: &NoiseSpec) -> Result<ProblemInstance> {
    if spec.snr_db.is_nan() || spec.snr_db == f64::NEG_INFINITY {
        return Err(invalid("snr_db", format!("must be a number or +inf, got {}", spec.snr_db)));
    }
    let mut out = inst.clone();
    out.snr_db = spec.snr_db;
    if spec.snr_db == f64::INFINITY {
        out.y_delta = inst.y_true.clone();
        out.delta = 0.0;
        return Ok(out);
    }
    let m = inst.y_true.len();
    let signal_power = norm2_sq(&inst.y_true) / m as f64;
    if signal_power == 0.0 {
        return Err(invalid("y_true", "cannot set a finite SNR on a zero signal"));
    }
    let reference = match spec.power {
        NoisePower::Unit => 1.0,
        NoisePower::Measured => signal_power,
    };
    let sd = (reference * 10f64.powf(-spec.snr_db / 10.0)).sqrt();
    let mut rng = rng_for(spec.seed, STREAM_NOISE);
    out.y_delta = inst
        .y_true
        .iter()
        .map(|y| {
            let e: f64 = StandardNormal.sample(&mut rng);
            y + sd * e
        })
        .collect();
    out.delta = dist2(&out.y_true, &out.y_delta);
    Ok(out)
}

/// `10·log₁₀(P_signal/P_noise)` of a noisy measurement.
pub fn realized_snr_db(y_true: &[f64], y_delta: &[f64]) -> Result<f64> {
    check_len("realized_snr_db", y_true.len(), y_delta.len())?;
    let noise = dist2(y_true, y_delta).powi(2);
    Ok(10.0 * (norm2_sq(y_true) / noise).log10())
}

fn check_truth(x_star: &[f64], x_true: &[f64]) -> Result<f64> {
    check_len("metric", x_true.len(), x_star.len())?;
    let nt = norm2(x_true);
    if nt == 0.0 {
        return Err(invalid("x_true", "reference signal must be nonzero"));
    }
    Ok(nt)
}

/// `‖x* − x†‖₂ / ‖x†‖₂`
pub fn rerror_metric(x_star: &[f64], x_true: &[f64]) -> Result<f64> {
    let nt = check_truth(x_star, x_true)?;
    Ok(dist2(x_star, x_true) / nt)
}

/// `−10·log₁₀(‖x* − x†‖² / ‖x†‖²)` in dB; `+∞` for exact recovery.
pub fn snr_metric(x_star: &[f64], x_true: &[f64]) -> Result<f64> {
    let e = rerror_metric(x_star, x_true)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-20.0 * e.log10())
}

const INSTANCE_META: &str = "instance.txt";

/// Writes an instance into `dir`: `instance.txt` (metadata), the operator
/// (`A.csv`, or `blur.txt` holding the blur parameters and the true image),
/// and `y_true.csv`, `y_delta.csv`, `x_true.csv` as vectors.
pub fn export_instance(inst: &ProblemInstance, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(dir.join(name))?))
    };
    let kind = match &inst.op {
        Operator::Dense(a) => {
            let mut w = create("A.csv")?;
            a.write_csv(&mut w)?;
            w.flush()?;
            "dense"
        }
        Operator::Blur(b) => {
            let image = inst
                .x_true
                .clone()
                .unwrap_or_else(|| vec![0.0; b.side() * b.side()]);
            let mut w = create("blur.txt")?;
            io::write_blur_record(
                &mut w,
                &BlurRecord {
                    n: b.side(),
                    band: b.band(),
                    sigma: b.sigma(),
                    image,
                },
            )?;
            w.flush()?;
            "blur"
        }
    };
    let mut meta = create(INSTANCE_META)?;
    writeln!(meta, "# kind={kind}")?;
    writeln!(meta, "# seed={}", inst.seed)?;
    writeln!(meta, "# snr_db={}", io::fmt_f64(inst.snr_db))?;
    writeln!(meta, "# delta={}", io::fmt_f64(inst.delta))?;
    meta.flush()?;
    for (name, v) in [("y_true.csv", Some(&inst.y_true)), ("y_delta.csv", Some(&inst.y_delta)), ("x_true.csv", inst.x_true.as_ref())] {
        if let Some(v) = v {
            let mut w = create(name)?;
            io::write_vector_csv(&mut w, v)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Reads an instance written by [`export_instance`]. `delta` is recomputed
/// from the data.
pub fn import_instance(dir: &Path) -> Result<ProblemInstance> {
    let open = |name: &str| File::open(dir.join(name)).map_err(|e| Error::Io(format!("{}: {e}", dir.join(name).display())));
    let meta = std::fs::read_to_string(dir.join(INSTANCE_META))?;
    let field = |key: &str| -> Option<String> {
        meta.lines()
            .filter_map(|l| l.trim().strip_prefix('#'))
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
    };
    let seed = field("seed")
        .map(|s| s.parse::<u64>().map_err(|_| invalid("seed", format!("bad value {s:?}"))))
        .transpose()?
        .unwrap_or(0);
    let snr_db = match field("snr_db").as_deref() {
        Some("inf") | None => f64::INFINITY,
        Some(s) => s.parse::<f64>().map_err(|_| invalid("snr_db", format!("bad value {s:?}")))?,
    };
    let x_true = match open("x_true.csv") {
        Ok(f) => Some(io::read_vector_csv(f)?),
        Err(_) => None,
    };
    let op: Operator = match field("kind").as_deref() {
        Some("dense") => io::read_matrix_csv(open("A.csv")?)?.into(),
        Some("blur") => {
            let rec = io::read_blur_record(open("blur.txt")?)?;
            KroneckerBlur::new(rec.n, rec.band, rec.sigma)?.into()
        }
        other => return Err(invalid("kind", format!("unknown instance kind {other:?}"))),
    };
    let y_true = io::read_vector_csv(open("y_true.csv")?)?;
    let y_delta = io::read_vector_csv(open("y_delta.csv")?)?;
    check_len("imported y_true", op.range_dim(), y_true.len())?;
    check_len("imported y_delta", op.range_dim(), y_delta.len())?;
    if let Some(x) = &x_true {
        check_len("imported x_true", op.domain_dim(), x.len())?;
    }
    let delta = dist2(&y_true, &y_delta);
    Ok(ProblemInstance {
        op,
        y_true,
        y_delta,
        x_true,
        delta,
        seed,
        snr_db,
    })
}
