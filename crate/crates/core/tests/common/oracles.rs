//! Independent reference implementations used to check the library.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use spoofguard::metrics::ScoreSet;

/// |X_k|^2 for k = 0..=n/2 by the O(n^2) definition of the DFT.
pub fn naive_dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                acc += Complex64::from_polar(v, phase);
            }
            acc.norm_sqr()
        })
        .collect()
}

/// Energy of the full two-sided spectrum recovered from one-sided power.
pub fn two_sided_energy(power: &[f64], n: usize) -> f64 {
    power
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == 0 || 2 * k == n { p } else { 2.0 * p })
        .sum()
}

/// Triangular filterbank evaluated pointwise as max(0, min(rise, fall)).
pub fn triangle_filterbank(
    n_mels: usize,
    n_fft: usize,
    sr: f64,
    fmin: f64,
    fmax: f64,
) -> Vec<Vec<f64>> {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(fmin), mel(fmax));
    let breaks: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|k| {
            (0..=n_fft / 2)
                .map(|j| {
                    let f = j as f64 * sr / n_fft as f64;
                    let rise = (f - breaks[k]) / (breaks[k + 1] - breaks[k]);
                    let fall = (breaks[k + 2] - f) / (breaks[k + 2] - breaks[k + 1]);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// (FAR, FRR) at every threshold θ in {-inf} ∪ scores, accepting a trial
/// iff its score exceeds θ, ordered by θ with repeated θ dropped.
pub fn brute_operating_points(s: &ScoreSet) -> Vec<(f64, f64)> {
    let mut thetas: Vec<f64> = s.bonafide.iter().chain(&s.spoof).copied().collect();
    thetas.push(f64::NEG_INFINITY);
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let (nb, ns) = (s.bonafide.len() as f64, s.spoof.len() as f64);
    thetas
        .iter()
        .map(|&th| {
            let fa = s.spoof.iter().filter(|&&x| x > th).count() as f64 / ns;
            let fr = s.bonafide.iter().filter(|&&x| x <= th).count() as f64 / nb;
            (fa, fr)
        })
        .collect()
}

/// FAR = FRR crossing of the piecewise-linear curve through the brute-force
/// operating points.
pub fn brute_eer(s: &ScoreSet) -> f64 {
    let pts = brute_operating_points(s);
    for (i, &(fa, fr)) in pts.iter().enumerate() {
        let d = fa - fr;
        if d == 0.0 {
            return fa;
        }
        if d < 0.0 {
            let (fa0, fr0) = pts[i - 1];
            let d0 = fa0 - fr0;
            let t = d0 / (d0 - d);
            return fa0 + t * (fa - fa0);
        }
    }
    unreachable!()
}

pub fn brute_min_tdcf(s: &ScoreSet, c1: f64, c2: f64) -> f64 {
    brute_operating_points(s)
        .iter()
        .map(|&(fa, fr)| (c1 * fr + c2 * fa) / c1.min(c2))
        .fold(f64::INFINITY, f64::min)
}

/// 2..=12 trials with at least one per class. Scores are drawn from a small
/// grid half the time so that ties are common.
pub fn random_score_set(rng: &mut ChaCha8Rng) -> ScoreSet {
    let n = rng.gen_range(2..=12);
    let nb = rng.gen_range(1..n);
    let coarse = rng.gen_bool(0.5);
    let mut draw = |shift: f64| {
        if coarse {
            rng.gen_range(-3..=3) as f64 * 0.5 + shift
        } else {
            rng.gen_range(-3.0..3.0) + shift
        }
    };
    let shift = 0.5;
    let bona = (0..nb).map(|_| draw(shift)).collect();
    let spoof = (0..n - nb).map(|_| draw(0.0)).collect();
    ScoreSet::new(bona, spoof)
}

/// The worked example: three bona fide and three spoof trials.
pub fn worked_example() -> ScoreSet {
    ScoreSet::new(vec![0.8, 0.7, 0.3], vec![0.2, 0.6, 0.4])
}
