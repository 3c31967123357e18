//! Solver outputs against independent brute-force oracles.
//!
//! Two-antenna covariances with trace `P` are parametrized by the Bloch
//! ball, `S = P/2 (I + x X + y Y + z Z)` with `|r| <= 1`, so RF powers are
//! affine in `r` and can be evaluated without any matrix code.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdbeam::channel::{sample_channels, ChannelModelParams};
use tdbeam::schemes::{multibeam, tdma, time_division};
use tdbeam::solver_kernels::{solve_multibeam, solve_sca_subproblem, solve_time_lp, ScaSubproblem};
use tdbeam::{AlgorithmSettings, ChannelSet, Covariance, EhParams, SolverStatus, SolverTolerances};

/// RF power (mW) at a receiver with row `h` as an affine function of the
/// Bloch vector: `(constant, linear coefficients)`.
fn bloch_form(h: &[Complex64], p: f64, scale: f64) -> (f64, [f64; 3]) {
    let c = h[0].conj() * h[1];
    let k = 0.5 * p * scale;
    let norm = h[0].norm_sqr() + h[1].norm_sqr();
    (k * norm, [k * 2.0 * c.re, k * 2.0 * c.im, k * (h[0].norm_sqr() - h[1].norm_sqr())])
}

fn rf(form: &(f64, [f64; 3]), r: &[f64; 3]) -> f64 {
    form.0 + form.1[0] * r[0] + form.1[1] * r[1] + form.1[2] * r[2]
}

fn two_antenna(k: usize, seed: u64) -> ChannelSet {
    let model = ChannelModelParams { num_ers: k, ..ChannelModelParams::default().with_antennas(2) };
    sample_channels(&model, seed).unwrap()
}

fn random_unit_ball(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if r.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return r;
        }
    }
}

fn project_ball(r: [f64; 3]) -> [f64; 3] {
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1.0 {
        r.map(|x| x / n)
    } else {
        r
    }
}

#[test]
fn multibeam_matches_bloch_ball_grid() {
    let p = 10.0;
    for seed in 0..3 {
        let ch = two_antenna(3, seed);
        let forms: Vec<_> = (0..3).map(|k| bloch_form(ch.row(k), p, ch.rf_unit_scale())).collect();
        let n = 100;
        let mut best = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let r = [i, j, l].map(|v| -1.0 + 2.0 * (v as f64 + 0.5) / n as f64);
                    if r.iter().map(|x| x * x).sum::<f64>() > 1.0 {
                        continue;
                    }
                    best = best.max(forms.iter().map(|f| rf(f, &r)).fold(f64::INFINITY, f64::min));
                }
            }
        }
        let (_, cert) = solve_multibeam(&ch, p, &SolverTolerances::default()).unwrap();
        assert_eq!(cert.status, SolverStatus::Optimal);
        assert!(cert.objective >= best * (1.0 - 1e-9), "solver {} below grid {best}", cert.objective);
        assert!((cert.objective - best).abs() <= 5e-3 * best, "solver {} vs grid {best}", cert.objective);
    }
}

#[test]
fn multibeam_orthogonal_pair_splits_power() {
    let a = Complex64::new(0.3, -0.4);
    let z = Complex64::new(0.0, 0.0);
    let ch = ChannelSet::new(vec![vec![a, z, z], vec![z, a * Complex64::new(0.0, 1.0), z]], 1.0).unwrap();
    let (_, cert) = solve_multibeam(&ch, 8.0, &SolverTolerances::default()).unwrap();
    let expected = 8.0 * a.norm_sqr() / 2.0;
    assert!((cert.objective - expected).abs() <= 1e-3 * expected);
}

/// Max over `lam in [0, 1]` of the dual function of the unconstrained
/// two-slot surrogate: each slot contributes `max_r` of a linear function
/// over the ball, which is `const + |linear|`.
fn sca_dual_grid(forms: &[(f64, [f64; 3])], durations: &[f64], coefs: &[Vec<f64>], offsets: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let steps = 20_000;
    for i in 0..=steps {
        let lam = i as f64 / steps as f64;
        let w = [lam, 1.0 - lam];
        let mut v = w[0] * offsets[0] + w[1] * offsets[1];
        for n in 0..durations.len() {
            let mut c0 = 0.0;
            let mut lin = [0.0; 3];
            for k in 0..2 {
                let f = durations[n] * coefs[k][n] * w[k];
                c0 += f * forms[k].0;
                for d in 0..3 {
                    lin[d] += f * forms[k].1[d];
                }
            }
            v += c0 + lin.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        best = best.min(v);
    }
    best
}

#[test]
fn sca_subproblem_matches_dual_grid_and_random_search() {
    let p = 5.0;
    let tol = SolverTolerances::default();
    for seed in 0..4 {
        let ch = two_antenna(2, seed + 10);
        let forms: Vec<_> = (0..2).map(|k| bloch_form(ch.row(k), p, ch.rf_unit_scale())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefs: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.random_range(0.1..1.0)).collect()).collect();
        let durations = [0.3, 0.7];
        let offsets = [rng.random_range(0.0..0.2), rng.random_range(0.0..0.2)];
        let centers = vec![Covariance::isotropic(2, p), Covariance::mrt(ch.row(1), p).unwrap()];
        let sub = ScaSubproblem {
            channels: &ch,
            p_max: p,
            durations: &durations,
            coefs: &coefs,
            offsets: Some(&offsets),
            centers: &centers,
            gamma: 1e6,
        };
        let (_, cert) = solve_sca_subproblem(&sub, &tol).unwrap();
        assert_eq!(cert.status, SolverStatus::Optimal, "{cert}");
        let upper = sca_dual_grid(&forms, &durations, &coefs, &offsets);
        assert!(cert.objective <= upper * (1.0 + 1e-9), "solver {} above dual {upper}", cert.objective);
        assert!(cert.objective >= upper * (1.0 - 1e-2), "solver {} vs dual {upper}", cert.objective);

        // Primal random search is a lower bound, also with a binding trust
        // region. Isotropic is the ball's center; MRT towards h is the unit
        // vector (2 Re c, 2 Im c, |h0|^2 - |h1|^2) / |h|^2, c = conj(h0) h1.
        let h = ch.row(1);
        let g = h[0].norm_sqr() + h[1].norm_sqr();
        let c = h[0].conj() * h[1];
        let center_r = [[0.0; 3], [2.0 * c.re / g, 2.0 * c.im / g, (h[0].norm_sqr() - h[1].norm_sqr()) / g]];
        for gamma in [1e6, 0.3] {
            let sub = ScaSubproblem { gamma, ..sub };
            let (_, cert) = solve_sca_subproblem(&sub, &tol).unwrap();
            let mut best = f64::NEG_INFINITY;
            for _ in 0..200_000 {
                let rs = [random_unit_ball(&mut rng), random_unit_ball(&mut rng)];
                let mut ok = true;
                let mut v = [offsets[0], offsets[1]];
                for n in 0..2 {
                    for k in 0..2 {
                        let q = rf(&forms[k], &rs[n]);
                        if (q - rf(&forms[k], &center_r[n])).abs() > gamma {
                            ok = false;
                        }
                        v[k] += durations[n] * coefs[k][n] * q;
                    }
                }
                if ok {
                    best = best.max(v[0].min(v[1]));
                }
            }
            assert!(cert.objective >= best - 1e-9, "gamma {gamma}: solver {} below random search {best}", cert.objective);
            assert!(cert.objective <= best * 1.05 + 1e-9, "gamma {gamma}: solver {} far above random search {best}", cert.objective);
        }
    }
}

fn simplex_grid_max(table: &[Vec<f64>], steps: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..=steps {
        for j in 0..=steps - i {
            let t = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
            let v = table.iter().map(|r| r[0] * t[0] + r[1] * t[1] + r[2] * t[2]).fold(f64::INFINITY, f64::min);
            best = best.max(v);
        }
    }
    best
}

#[test]
fn time_lp_matches_simplex_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let tol = SolverTolerances::default();
    for _ in 0..50 {
        let k = rng.random_range(2..=5);
        let table: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let (_, cert) = solve_time_lp(&table, 1.0, &tol).unwrap();
        let grid = simplex_grid_max(&table, 2000);
        assert!(grid <= cert.objective + 1e-12);
        assert!((cert.objective - grid) <= 1e-3 * cert.objective, "lp {} vs grid {grid}", cert.objective);
    }
}

#[test]
fn tdma_matches_simplex_grid() {
    let eh = EhParams::default();
    let model = ChannelModelParams { num_ers: 3, ..ChannelModelParams::default().with_antennas(4) };
    for seed in 0..5 {
        let ch = sample_channels(&model, seed).unwrap();
        let p = 6.0;
        let table: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                (0..3)
                    .map(|n| eh.dc_power(ch.rf_power_mw(k, Covariance::mrt(ch.row(n), p).unwrap().matrix()).unwrap()).unwrap())
                    .collect()
            })
            .collect();
        let grid = simplex_grid_max(&table, 2000);
        let (s, r) = tdma(&ch, p, 1.0, &eh).unwrap();
        assert!((s.durations().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(grid <= r.min_dc_energy + 1e-12);
        assert!((r.min_dc_energy - grid) <= 1e-3 * r.min_dc_energy);
    }
}

/// Best two-slot schedule found by random search plus hill climbing over
/// `(tau, r1, r2)` with full-power covariances.
fn time_division_search(ch: &ChannelSet, p: f64, eh: &EhParams, seed: u64) -> f64 {
    let forms: Vec<_> = (0..2).map(|k| bloch_form(ch.row(k), p, ch.rf_unit_scale())).collect();
    let value = |tau: f64, r: &[[f64; 3]; 2]| -> f64 {
        (0..2)
            .map(|k| tau * eh.dc_power(rf(&forms[k], &r[0]).max(0.0)).unwrap() + (1.0 - tau) * eh.dc_power(rf(&forms[k], &r[1]).max(0.0)).unwrap())
            .fold(f64::INFINITY, f64::min)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(f64, f64, [[f64; 3]; 2])> = (0..100_000)
        .map(|_| {
            let tau = rng.random_range(0.0..1.0);
            let r = [random_unit_ball(&mut rng), random_unit_ball(&mut rng)];
            (value(tau, &r), tau, r)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = candidates[0].0;
    for &(mut v, mut tau, mut r) in candidates.iter().take(10) {
        let mut step = 0.2;
        while step > 1e-6 {
            let mut improved = false;
            for _ in 0..200 {
                let t2 = (tau + step * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0);
                let r2 = [0, 1].map(|n| project_ball([0, 1, 2].map(|d| r[n][d] + step * rng.random_range(-1.0..1.0))));
                let v2 = value(t2, &r2);
                if v2 > v {
                    (v, tau, r) = (v2, t2, r2);
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(v);
    }
    best
}

#[test]
fn time_division_matches_search_on_two_receivers() {
    let eh = EhParams::default();
    let settings = AlgorithmSettings::default();
    for (seed, p) in [(0, 4.0), (1, 8.0), (2, 15.0), (3, 40.0)] {
        let ch = two_antenna(2, seed);
        let (s, r) = time_division(&ch, p, 1.0, &eh, &settings).unwrap();
        s.check().unwrap();
        let oracle = time_division_search(&ch, p, &eh, seed);
        let (_, mb) = multibeam(&ch, p, 1.0, &eh).unwrap();
        assert!(r.min_dc_energy >= mb.min_dc_energy - 1e-6);
        assert!(
            (r.min_dc_energy - oracle).abs() <= 0.02 * oracle,
            "p = {p}: time-division {} vs search {oracle}",
            r.min_dc_energy
        );
    }
}

#[test]
fn rician_entries_have_mean_gain() {
    let model = ChannelModelParams { num_ers: 25, ..ChannelModelParams::default().with_antennas(4) };
    let g = model.average_gain();
    let kr = model.rician_factor;
    let los_weight = (kr / (1.0 + kr)).sqrt();
    let mut power = 0.0;
    let mut count = 0usize;
    let mut mean_dev = Complex64::new(0.0, 0.0);
    for seed in 0..1000 {
        let ch = sample_channels(&model, 10_000 + seed).unwrap();
        for k in 0..25 {
            let los = tdbeam::channel::los_row(&model, k).unwrap();
            for (h, l) in ch.row(k).iter().zip(&los) {
                power += h.norm_sqr();
                mean_dev += h - l * los_weight;
                count += 1;
            }
        }
    }
    assert_eq!(count, 100_000);
    let mean_power = power / count as f64;
    assert!((mean_power - g).abs() <= 0.02 * g, "{mean_power} vs {g}");
    // Scattered part has zero mean: sample mean within a few standard errors.
    let sd = (g / (1.0 + kr) / count as f64).sqrt();
    assert!((mean_dev / count as f64).norm() < 5.0 * sd);
}
