//! Checks against independent re-implementations and statistical oracles.

use num_complex::Complex64;
use rand::Rng;

use indoor_mimo::channel::{complex_gaussian, ChannelMatrix, PilotConfig};
use indoor_mimo::config::RunConfig;
use indoor_mimo::geometry::{build_topology, Room, TopologyKind};
use indoor_mimo::montecarlo::{drop_users, run_power_campaign, DropSpec};
use indoor_mimo::par::Execution;
use indoor_mimo::precoding::{sinr_statistics, zf_required_power, LinkBudget};
use indoor_mimo::rng::{from_seed, stream, Stream};

fn random_channel<G: Rng>(m: usize, k: usize, variance: f64, rng: &mut G) -> ChannelMatrix {
    ChannelMatrix::from_fn(m, k, |_, _| complex_gaussian(rng, variance))
}

/// Two-user zero forcing written out by hand: cofactor inverse of the Gram
/// matrix, then `b = G^T A` for the channel `g` and precoder built on `g_hat`.
fn effective_2x2(g: &ChannelMatrix, g_hat: &ChannelMatrix) -> [[Complex64; 2]; 2] {
    let m = g.m_count();
    let gram = |i: usize, j: usize| -> Complex64 {
        (0..m)
            .map(|r| g_hat.get(r, i) * g_hat.get(r, j).conj())
            .sum()
    };
    let (a, b, c, d) = (gram(0, 0), gram(0, 1), gram(1, 0), gram(1, 1));
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let trace = (inv[0][0] + inv[1][1]).re;
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (k, row) in out.iter_mut().enumerate() {
        for (i, cell) in row.iter_mut().enumerate() {
            // a_i = conj(G_hat) inv[:, i] / sqrt(trace)
            *cell = (0..m)
                .map(|r| {
                    let a_ri = (0..2)
                        .map(|j| g_hat.get(r, j).conj() * inv[j][i])
                        .sum::<Complex64>();
                    g.get(r, k) * a_ri
                })
                .sum::<Complex64>()
                / trace.sqrt();
        }
    }
    out
}

#[test]
fn required_power_matches_grid_sweep() {
    let mut rng = from_seed(11);
    let sigma2 = 6.3e-13;
    let target_se = 4.0;
    let threshold = 2f64.powf(target_se) - 1.0;
    for _ in 0..20 {
        let g = random_channel(8, 2, 1e-8, &mut rng);
        let budget = LinkBudget {
            rho_dl: 1.0,
            sigma2,
            target_se,
        };
        let required = zf_required_power(&g, &budget).unwrap();

        // perfect CSI: b = G^T A, SINR_k = rho |b_kk|^2 / (sigma^2 + rho sum_i!=k |b_ki|^2)
        let b = effective_2x2(&g, &g);
        let sinr = |rho: f64, k: usize| {
            let leak: f64 = (0..2).filter(|&i| i != k).map(|i| b[k][i].norm_sqr()).sum();
            rho * b[k][k].norm_sqr() / (sigma2 + rho * leak)
        };
        // smallest power on a grid of 1e-4 dB steps meeting the target for both users
        let start = required * 0.5;
        let step = 10f64.powf(1e-5);
        let mut rho = start;
        while !(sinr(rho, 0) >= threshold && sinr(rho, 1) >= threshold) {
            rho *= step;
            assert!(rho < 4.0 * required, "sweep ran away");
        }
        assert!(
            rho >= required * (1.0 - 1e-9) && rho <= required * step * (1.0 + 1e-9),
            "{rho} vs {required}"
        );
    }
}

#[test]
fn sinr_moments_match_independent_implementation() {
    let (m, k) = (8, 2);
    let mut rng = from_seed(12);
    let g = random_channel(m, k, 1e-8, &mut rng);
    let cfg = PilotConfig {
        tau_p: 2,
        tau_c: 20,
        rho_ul: 2.5e-4,
        sigma2: 1e-12,
    };
    let n = 100_000;
    let stats = sinr_statistics(&g, &cfg, n, 99, Execution::Parallel).unwrap();
    assert_eq!(stats.realizations, n);

    // Oracle draws its own noise: different stream, same distribution.
    let batches = 100;
    let per = n / batches;
    let err_sd = cfg.error_variance().sqrt();
    let mut oracle_rng = from_seed(777);
    let mut draws: Vec<[[Complex64; 2]; 2]> = Vec::with_capacity(n);
    for _ in 0..n {
        let g_hat = ChannelMatrix::from_fn(m, k, |r, c| {
            g.get(r, c) + complex_gaussian(&mut oracle_rng, 1.0) * err_sd
        });
        draws.push(effective_2x2(&g, &g_hat));
    }

    // batch-means standard error of a per-draw quantity
    let mean_and_se = |f: &dyn Fn(&[[Complex64; 2]; 2]) -> f64| {
        let means: Vec<f64> = draws
            .chunks(per)
            .map(|c| c.iter().map(|d| f(d)).sum::<f64>() / per as f64)
            .collect();
        let mu = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (mu, (var / batches as f64).sqrt())
    };
    let within = |name: &str, ours: f64, (mu, se): (f64, f64)| {
        // both estimates carry comparable error at equal sample size
        let combined = se * 2f64.sqrt();
        assert!(
            (ours - mu).abs() <= 3.0 * combined,
            "{name}: {ours} vs oracle {mu} +/- {combined}"
        );
    };
    for u in 0..k {
        within(
            "Re E b_kk",
            stats.signal_mean[u].re,
            mean_and_se(&|d| d[u][u].re),
        );
        within(
            "Im E b_kk",
            stats.signal_mean[u].im,
            mean_and_se(&|d| d[u][u].im),
        );
        let center = stats.signal_mean[u];
        within(
            "var b_kk",
            stats.signal_var[u],
            mean_and_se(&|d| (d[u][u] - center).norm_sqr()),
        );
        within(
            "E|b_ki|^2",
            stats.interference[u],
            mean_and_se(&|d| d[u][1 - u].norm_sqr()),
        );
    }
}

#[test]
fn sinr_does_not_improve_with_pilot_noise() {
    let (m, k) = (16, 4);
    let budget = LinkBudget {
        rho_dl: 1e-3,
        sigma2: 1e-12,
        target_se: 4.0,
    };
    let noise_levels = [1e-13, 1e-12, 1e-11];
    let drops = 100;
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); noise_levels.len()];
    for drop in 0..drops {
        let g = random_channel(m, k, 1e-8, &mut stream(5, Stream::Users, &[drop]));
        for (level, &noise) in noise_levels.iter().enumerate() {
            let cfg = PilotConfig {
                tau_p: k,
                tau_c: 10 * k,
                rho_ul: 1e-3,
                sigma2: noise,
            };
            let s = sinr_statistics(&g, &cfg, 200, drop, Execution::Sequential).unwrap();
            let sinr = s.sinr(budget.rho_dl, budget.sigma2);
            per_level[level].push(sinr.iter().sum::<f64>() / k as f64);
        }
    }
    for w in per_level.windows(2) {
        let diffs: Vec<f64> = w[1]
            .iter()
            .zip(&w[0])
            .map(|(hi_noise, lo_noise)| hi_noise - lo_noise)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            mean <= 3.0 * sd / n.sqrt(),
            "mean SINR change {mean} with SE {}",
            sd / n.sqrt()
        );
        assert!(mean < 0.0);
    }
}

#[test]
fn single_user_drops_are_uniform() {
    let room = Room::default();
    let topology = build_topology(TopologyKind::QuadStrip4Walls, &room, 512, 0.15).unwrap();
    let spec = DropSpec {
        k_count: 1,
        ..DropSpec::default()
    };
    let n = 100_000;
    let (mut sx, mut sy) = (0.0, 0.0);
    for drop in 0..n {
        let u = drop_users(
            &room,
            &spec,
            &topology.poses,
            &mut stream(spec.seed, Stream::Users, &[drop]),
        )
        .unwrap()[0];
        sx += u.x;
        sy += u.y;
    }
    let width = room.lx - 2.0 * spec.margin;
    let se = width / 12f64.sqrt() / (n as f64).sqrt();
    let (mx, my) = (sx / n as f64, sy / n as f64);
    assert!((mx - 20.0).abs() < 3.0 * se, "mean x {mx}, SE {se}");
    assert!((my - 20.0).abs() < 3.0 * se, "mean y {my}, SE {se}");
}

#[test]
fn doubling_drops_moves_median_less_than_ci_width() {
    let mut config = RunConfig {
        antennas: 64,
        users: 8,
        ..RunConfig::default()
    };
    config.candelabrum.rows = 2;
    config.candelabrum.cols = 4;
    let scenario = config.scenario().unwrap();
    for kind in [TopologyKind::QuadStrip4Walls, TopologyKind::Candelabrum] {
        config.drops.n_drops = 400;
        let small = run_power_campaign(
            &scenario,
            kind,
            &config.power_campaign(),
            Execution::Parallel,
        )
        .unwrap();
        config.drops.n_drops = 800;
        let large = run_power_campaign(
            &scenario,
            kind,
            &config.power_campaign(),
            Execution::Parallel,
        )
        .unwrap();
        let (lo, hi) = small.median_ci95_dbm();
        let shift = (large.median_dbm() - small.median_dbm()).abs();
        assert!(
            shift < hi - lo,
            "{kind}: median moved {shift} dB, CI width {}",
            hi - lo
        );
    }
}
