//! Sign-pattern sweeps, sharpness probes and product identities.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{build_eta_with_fallback, build_pi, validate_partition};
use crate::signs::{classify_pairs, heavy_target, Sign, SignVector};

pub const MAX_SWEEP_LEN: usize = 24;
/// Patterns beyond this count are sampled instead of enumerated.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 20;
/// Seeded uniform samples added to the stride sample.
pub const UNIFORM_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sigma: SignVector,
    #[serde(rename = "J")]
    pub j_count: usize,
    #[serde(rename = "K")]
    pub k_count: usize,
    pub heavy: usize,
    pub target: usize,
    pub ladder: bool,
    pub valid: bool,
}

/// Builds and validates both partitions for one pattern. Construction
/// errors are recorded as `valid: false`.
pub fn sweep_record(sigma: &SignVector) -> SweepRecord {
    let (j, k) = classify_pairs(sigma);
    let target = heavy_target(sigma);
    let pi_ok = build_pi(sigma)
        .map(|p| validate_partition(sigma, &p).ok)
        .unwrap_or(false);
    let (heavy, ladder, eta_ok) = match build_eta_with_fallback(sigma) {
        Ok(out) => (
            out.partition.heavy_count,
            out.ladder,
            validate_partition(sigma, &out.partition).ok,
        ),
        Err(_) => (0, false, false),
    };
    SweepRecord {
        sigma: sigma.clone(),
        j_count: j.len(),
        k_count: k.len(),
        heavy,
        target,
        ladder,
        valid: pi_ok && eta_ok && heavy == target,
    }
}

/// Pattern indices visited by a sweep of length `n`, ascending.
///
/// Up to 2^20 patterns every index is used. Beyond that: every
/// `2^n / 2^20`-th index, plus [`UNIFORM_SAMPLES`] indices drawn from a
/// ChaCha8 stream seeded with `seed`.
pub fn sweep_indices(n: usize, seed: u64) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let total = 1u64 << n;
    if total <= EXHAUSTIVE_LIMIT {
        return (0..total).collect();
    }
    let stride = total / EXHAUSTIVE_LIMIT;
    let mut out: Vec<u64> = (0..EXHAUSTIVE_LIMIT).map(|k| k * stride).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..UNIFORM_SAMPLES).map(|_| rng.gen_range(0..total)));
    out.sort_unstable();
    out.dedup();
    out
}

fn check_len(n: usize) -> Result<()> {
    if n > MAX_SWEEP_LEN {
        return Err(Error::Domain(format!(
            "sweep length {n} exceeds {MAX_SWEEP_LEN}"
        )));
    }
    Ok(())
}

/// Records for the given pattern indices, in input order, computed on
/// `jobs` worker threads (0 picks the rayon default).
pub fn sweep_patterns(n: usize, indices: &[u64], jobs: usize) -> Result<Vec<SweepRecord>> {
    check_len(n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        indices
            .par_iter()
            .map(|&idx| sweep_record(&SignVector::from_index(n, idx)))
            .collect()
    }))
}

pub fn sweep(n: usize, jobs: usize, seed: u64) -> Result<Vec<SweepRecord>> {
    check_len(n)?;
    sweep_patterns(n, &sweep_indices(n, seed), jobs)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n: usize,
    pub patterns: usize,
    pub valid: usize,
    pub invalid: usize,
    pub ladder_used: usize,
    pub ladder_fraction: f64,
}

impl SweepSummary {
    pub fn of(n: usize, records: &[SweepRecord]) -> Self {
        let valid = records.iter().filter(|r| r.valid).count();
        let ladder_used = records.iter().filter(|r| r.ladder).count();
        SweepSummary {
            n,
            patterns: records.len(),
            valid,
            invalid: records.len() - valid,
            ladder_used,
            ladder_fraction: if records.is_empty() {
                0.0
            } else {
                ladder_used as f64 / records.len() as f64
            },
        }
    }
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, records: &[SweepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Settings for [`maximize_f`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizeConfig {
    pub restarts: usize,
    /// Full coordinate sweeps per restart.
    pub iterations: usize,
    pub seed: u64,
    /// Magnitude floor: every coordinate stays in `[delta, 1]` in absolute value.
    pub delta: f64,
    /// Grid points of the first coordinate sweep; each later sweep halves
    /// the count, down to `min_grid`.
    pub grid: usize,
    pub min_grid: usize,
    /// Golden-section steps refining each grid optimum.
    pub refine_steps: usize,
}

impl Default for MaximizeConfig {
    fn default() -> Self {
        MaximizeConfig {
            restarts: 16,
            iterations: 40,
            seed: 0,
            delta: 1e-6,
            grid: 65,
            min_grid: 9,
            refine_steps: 40,
        }
    }
}

impl MaximizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!(
                "delta = {} must lie in (0, 1)",
                self.delta
            )));
        }
        if self.restarts == 0 || self.grid < 2 || self.min_grid < 2 {
            return Err(Error::Domain(
                "restarts must be positive and grids at least 2 points".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizeReport {
    pub sigma: SignVector,
    pub best_value: f64,
    pub best_x: Vec<f64>,
    pub bound: f64,
    pub gap: f64,
    /// `best_value > bound * (1 + 1e-9)`: a counterexample to the bound.
    pub exceeds_bound: bool,
    /// Best value reached by each restart.
    pub restart_values: Vec<f64>,
    pub evaluations: u64,
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut k: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % b) as f64 * inv;
        k /= b;
        inv /= base as f64;
    }
    out
}

/// Halton point `k` in dimension `dim`, shifted modulo 1 by `shift`.
/// Dimensions past the prime table fall back to the shift alone.
fn halton(k: u64, dim: usize, shift: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let h = PRIMES.get(d).map_or(0.0, |&b| radical_inverse(k, b));
            (h + shift[d]).fract()
        })
        .collect()
}

struct Objective<'a> {
    signs: &'a [Sign],
    evaluations: u64,
}

impl Objective<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let mut acc = 1.0;
        for i in 0..x.len() {
            let mut prod = 1.0;
            for &xk in &x[i..] {
                prod *= xk;
                acc *= 1.0 - prod;
            }
        }
        acc
    }

    /// Signed coordinate from magnitude `t` in `[delta, 1]`.
    fn coord(&self, k: usize, t: f64) -> f64 {
        if self.signs[k].is_plus() {
            t
        } else {
            -t
        }
    }
}

/// Multi-start projected coordinate ascent for `f_n` over the box where
/// each `x_k` has the sign `sigma_k` and magnitude in `[delta, 1]`.
///
/// Starting points are a randomly shifted Halton set. Each coordinate step
/// scans a grid of magnitudes (endpoints included), then refines the best
/// grid cell by golden-section search. Deterministic given the config.
pub fn maximize_f(sigma: &SignVector, cfg: &MaximizeConfig) -> Result<MaximizeReport> {
    cfg.validate()?;
    let n = sigma.len();
    let bound = 2f64.powi(heavy_target(sigma) as i32);
    let mut obj = Objective {
        signs: sigma.entries(),
        evaluations: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let (lo, hi) = (cfg.delta, 1.0);

    let mut best_x: Vec<f64> = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    let mut restart_values = Vec::with_capacity(cfg.restarts);

    for r in 0..cfg.restarts {
        let u = halton(r as u64 + 1, n, &shift);
        let mut x: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(k, &t)| obj.coord(k, lo + t * (hi - lo)))
            .collect();
        let mut value = obj.eval(&x);
        let mut grid = cfg.grid;
        for _ in 0..cfg.iterations {
            let before = value;
            for k in 0..n {
                let current = x[k];
                let (t, v) = line_search(&mut obj, &mut x, k, lo, hi, grid, cfg.refine_steps);
                if v > value {
                    x[k] = obj.coord(k, t);
                    value = v;
                } else {
                    x[k] = current;
                }
            }
            grid = (grid / 2).max(cfg.min_grid);
            if value <= before {
                break;
            }
        }
        restart_values.push(value);
        if value > best_value {
            best_value = value;
            best_x = x;
        }
    }

    if n == 0 {
        best_value = 1.0;
    }
    Ok(MaximizeReport {
        sigma: sigma.clone(),
        best_value,
        best_x,
        bound,
        gap: bound - best_value,
        exceeds_bound: best_value > bound * (1.0 + 1e-9),
        restart_values,
        evaluations: obj.evaluations,
    })
}

/// Best magnitude for coordinate `k` with the others fixed. Leaves
/// `x[k]` at an arbitrary probe value; the caller restores it.
fn line_search(
    obj: &mut Objective,
    x: &mut [f64],
    k: usize,
    lo: f64,
    hi: f64,
    grid: usize,
    refine_steps: usize,
) -> (f64, f64) {
    let mut eval_at = |obj: &mut Objective, t: f64| {
        x[k] = obj.coord(k, t);
        obj.eval(x)
    };
    let step = (hi - lo) / (grid - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_idx = 0;
    for g in 0..grid {
        let t = if g == grid - 1 {
            hi
        } else {
            lo + g as f64 * step
        };
        let v = eval_at(obj, t);
        if v > best.1 {
            best = (t, v);
            best_idx = g;
        }
    }
    let mut a = if best_idx == 0 {
        lo
    } else {
        lo + (best_idx - 1) as f64 * step
    };
    let mut b = if best_idx + 1 >= grid {
        hi
    } else {
        (lo + (best_idx + 1) as f64 * step).min(hi)
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = eval_at(obj, c);
    let mut fd = eval_at(obj, d);
    for _ in 0..refine_steps {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval_at(obj, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval_at(obj, d);
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

fn validate_identity_input(y: &[f64], min_len: usize) -> Result<()> {
    if y.len() < min_len {
        return Err(Error::Domain(format!(
            "identity needs at least {min_len} values, got {}",
            y.len()
        )));
    }
    if let Some(k) = y.iter().position(|v| !v.is_finite() || *v == 0.0) {
        return Err(Error::Domain(format!(
            "y_{} = {} must be finite and nonzero",
            k + 1,
            y[k]
        )));
    }
    for j in 0..y.len() {
        for i in 0..j {
            if y[i] == y[j] {
                return Err(Error::Degenerate(format!(
                    "factor 1 - y_{}/y_{} is zero",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// `P` over the entries of `y` whose index is not in `skip`.
fn product_skipping(y: &[f64], skip: &[usize]) -> f64 {
    let mut acc = 1.0;
    for j in 0..y.len() {
        if skip.contains(&j) {
            continue;
        }
        for i in 0..j {
            if !skip.contains(&i) {
                acc *= 1.0 - y[i] / y[j];
            }
        }
    }
    acc
}

fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Relative gap between `P(y)^(n-2)` and the product of the `n`
/// leave-one-out products. Needs `n >= 3`; `y` need not be ordered, but
/// entries must be nonzero with no zero factor.
pub fn identity_residual(y: &[f64]) -> Result<f64> {
    validate_identity_input(y, 3)?;
    let n = y.len();
    let lhs = product_skipping(y, &[]).powi(n as i32 - 2);
    let rhs: f64 = (0..n).map(|k| product_skipping(y, &[k])).product();
    Ok(relative_gap(lhs, rhs))
}

/// Relative gap between `P(y)^((n-2)(n-3)/2)` and the product of the
/// leave-two-out products over all `k < l`. Needs `n >= 4`.
pub fn iterated_identity_residual(y: &[f64]) -> Result<f64> {
    validate_identity_input(y, 4)?;
    let n = y.len();
    let exponent = ((n - 2) * (n - 3) / 2) as i32;
    let lhs = product_skipping(y, &[]).powi(exponent);
    let rhs: f64 = (0..n)
        .flat_map(|k| ((k + 1)..n).map(move |l| (k, l)))
        .map(|(k, l)| product_skipping(y, &[k, l]))
        .product();
    Ok(relative_gap(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(s: &str) -> SignVector {
        s.parse().unwrap()
    }

    #[test]
    fn sweep_small() {
        let recs = sweep(2, 1, 0).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.valid));

        let recs = sweep(1, 1, 0).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            (recs[0].sigma.to_string(), recs[0].heavy),
            ("+".to_string(), 0)
        );
        assert_eq!(
            (recs[1].sigma.to_string(), recs[1].heavy, recs[1].target),
            ("-".to_string(), 1, 1)
        );

        let rec = sweep_record(&sv("-+-"));
        assert_eq!((rec.heavy, rec.valid), (2, true));
        assert!(sweep(0, 1, 0).unwrap().is_empty());
        assert!(sweep(25, 1, 0).is_err());
    }

    #[test]
    fn sweep_is_deterministic_across_jobs() {
        assert_eq!(sweep(7, 1, 3).unwrap(), sweep(7, 4, 3).unwrap());
    }

    #[test]
    fn sampled_indices() {
        let idx = sweep_indices(21, 9);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.len() > EXHAUSTIVE_LIMIT as usize);
        assert!(idx.len() <= EXHAUSTIVE_LIMIT as usize + UNIFORM_SAMPLES);
        assert_eq!(idx, sweep_indices(21, 9));
        assert_ne!(idx, sweep_indices(21, 10));
        assert_eq!(sweep_indices(3, 0), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn jsonl_schema() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[sweep_record(&sv("-+-"))]).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(
            line,
            "{\"sigma\":\"-+-\",\"J\":4,\"K\":2,\"heavy\":2,\"target\":2,\"ladder\":true,\"valid\":true}\n"
        );
    }

    #[test]
    fn maximize_examples() {
        let cfg = MaximizeConfig::default();
        let r = maximize_f(&sv("-"), &cfg).unwrap();
        assert_eq!(r.best_value, 2.0);
        assert_eq!(r.best_x, vec![-1.0]);

        let r = maximize_f(&sv("+"), &cfg).unwrap();
        assert_eq!(r.best_value, 1.0 - cfg.delta);

        let cfg = MaximizeConfig {
            delta: 1e-3,
            ..MaximizeConfig::default()
        };
        let r = maximize_f(&sv("--"), &cfg).unwrap();
        assert!(r.best_value >= 1.99, "{r:?}");
        assert!(!r.exceeds_bound);
        assert_eq!(r.bound, 2.0);
    }

    #[test]
    fn maximize_deterministic() {
        let cfg = MaximizeConfig {
            seed: 42,
            restarts: 4,
            ..MaximizeConfig::default()
        };
        let s = sv("-+--+");
        assert_eq!(maximize_f(&s, &cfg).unwrap(), maximize_f(&s, &cfg).unwrap());
    }

    #[test]
    fn maximize_rejects_bad_config() {
        let cfg = MaximizeConfig {
            delta: 0.0,
            ..MaximizeConfig::default()
        };
        assert!(maximize_f(&sv("-"), &cfg).is_err());
    }

    #[test]
    fn identity_examples() {
        assert_eq!(identity_residual(&[1.0, -2.0, 4.0]).unwrap(), 0.0);
        assert!(identity_residual(&[1.0, 2.0, 4.0, 8.0]).unwrap() <= 1e-12);
        assert!(identity_residual(&[1.0, -2.0, 4.0, -8.0, 16.0]).unwrap() <= 1e-12);
        assert!(iterated_identity_residual(&[1.0, 2.0, 4.0, 8.0]).unwrap() <= 1e-12);
        assert!(iterated_identity_residual(&[1.0, -2.0, 4.0, -8.0, 16.0]).unwrap() <= 1e-12);
        assert!(iterated_identity_residual(&[1.0, -3.0, 9.0, -27.0]).unwrap() <= 1e-12);
    }

    #[test]
    fn identity_errors() {
        assert!(matches!(
            identity_residual(&[1.0, 2.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            iterated_identity_residual(&[1.0, 2.0, 3.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            identity_residual(&[1.0, 2.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            identity_residual(&[1.0, 0.0, 2.0]),
            Err(Error::Domain(_))
        ));
    }
}
