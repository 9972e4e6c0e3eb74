use num_complex::Complex64;
use proptest::prelude::*;

use indoor_mimo::antenna::{design_patch, pattern_factor, SubstrateSpec};
use indoor_mimo::channel::{los_gain, ChannelMatrix};
use indoor_mimo::geometry::{
    build_topology, cart_to_sph, to_local_spherical, AntennaPose, Room, TopologyKind, Vec3,
};
use indoor_mimo::montecarlo::{lower_quantile, survival_curve};
use indoor_mimo::precoding::{zf_precoder, zf_required_power, zf_trace, LinkBudget};

const LAMBDA: f64 = 0.15;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3(1.0)
        .prop_filter("not too short", |v| v.norm() > 0.1)
        .prop_map(|v| v.normalized())
}

fn pose() -> impl Strategy<Value = AntennaPose> {
    (vec3(20.0), unit(), unit())
        .prop_filter("not parallel", |(_, b, u)| b.cross(*u).norm() > 0.1)
        .prop_map(|(p, b, u)| {
            // Gram-Schmidt the up vector against the boresight
            let up = (u - b * b.dot(u)).normalized();
            AntennaPose::new(p, b, up).unwrap()
        })
}

fn channel(m: usize, k: usize) -> impl Strategy<Value = ChannelMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m * k).prop_map(move |v| {
        ChannelMatrix::from_columns(
            m,
            k,
            v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
        )
        .unwrap()
    })
}

fn strip_kinds() -> impl Strategy<Value = TopologyKind> {
    prop::sample::select(TopologyKind::ALL[1..].to_vec())
}

proptest! {
    #[test]
    fn spherical_round_trip(p in vec3(50.0).prop_filter("r > 0", |p| p.norm() > 1e-6)) {
        let s = cart_to_sph(p);
        let back = s.to_cartesian();
        prop_assert!((back - p).norm() <= 1e-12 * p.norm());
    }

    #[test]
    fn local_frame_preserves_distance(a in pose(), t in vec3(30.0)) {
        let d = (t - a.position).norm();
        prop_assume!(d > 1e-6);
        let s = to_local_spherical(&a, t).unwrap();
        prop_assert!((s.r - d).abs() <= 1e-12 * d);
    }

    #[test]
    fn strip_poses_sit_on_walls_and_face_inward(kind in strip_kinds()) {
        let room = Room::default();
        let t = build_topology(kind, &room, 512, LAMBDA).unwrap();
        prop_assert_eq!(t.poses.len(), 512);
        let c = room.center();
        for p in &t.poses {
            let q = p.position;
            let on_wall = q.x.abs() < 1e-12 || q.y.abs() < 1e-12
                || (q.x - room.lx).abs() < 1e-12 || (q.y - room.ly).abs() < 1e-12;
            prop_assert!(on_wall);
            prop_assert!(p.boresight.dot(c - q) > 0.0);
        }
        let (walls, strips, spacing) = kind.strip_layout().unwrap();
        let per_strip = 512 / (walls * strips);
        for strip in t.poses.chunks(per_strip) {
            for w in strip.windows(2) {
                let gap = (w[1].position - w[0].position).norm();
                prop_assert!((gap - spacing * LAMBDA).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pattern_is_symmetric_and_front_only(theta in 0.0..std::f64::consts::PI, phi in -3.14f64..3.14) {
        let d = design_patch(&SubstrateSpec::default()).unwrap();
        let f = pattern_factor(theta, phi, &d);
        prop_assert_eq!(f, pattern_factor(theta, -phi, &d));
        if phi.abs() > std::f64::consts::FRAC_PI_2 {
            prop_assert_eq!(f, 0.0);
        }
    }

    #[test]
    fn gain_magnitude_is_translation_invariant(a in pose(), user in vec3(15.0), shift in vec3(100.0)) {
        prop_assume!((user - a.position).norm() > 0.5);
        let d = design_patch(&SubstrateSpec::default()).unwrap();
        let moved = AntennaPose::new(a.position + shift, a.boresight, a.up).unwrap();
        let g0 = los_gain(&a, user, &d).unwrap().norm();
        let g1 = los_gain(&moved, user + shift, &d).unwrap().norm();
        prop_assert!((g0 - g1).abs() <= 1e-9 * g0.max(1e-30));
    }

    #[test]
    fn trace_scales_inverse_square(g in channel(6, 3), s in 0.01f64..100.0) {
        let (t0, c) = zf_trace(&g).unwrap();
        prop_assume!(c < 1e8);
        let (t1, _) = zf_trace(&g.scaled(s)).unwrap();
        prop_assert!((t1 * s * s - t0).abs() <= 1e-9 * t0);
    }

    #[test]
    fn required_power_increases_with_target(g in channel(6, 3), se in 0.5f64..8.0) {
        let (_, c) = zf_trace(&g).unwrap();
        prop_assume!(c < 1e8);
        let p = |target_se| zf_required_power(&g, &LinkBudget { rho_dl: 1.0, sigma2: 1e-12, target_se }).unwrap();
        prop_assert!(p(se + 0.01) > p(se));
    }

    #[test]
    fn perfect_csi_precoder_diagonalizes(g in channel(8, 4)) {
        let (_, c) = zf_trace(&g).unwrap();
        prop_assume!(c < 1e6);
        let a = zf_precoder(&g).unwrap();
        prop_assert!((a.total_power() - 1.0).abs() < 1e-10);
        let diag = 1.0 / a.trace.sqrt();
        for k in 0..4 {
            for i in 0..4 {
                let b: Complex64 = g.user(k).iter().zip(a.column(i)).map(|(x, y)| x * y).sum();
                let expected = if k == i { diag } else { 0.0 };
                prop_assert!((b - expected).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn survival_curve_is_a_survival_function(mut data in prop::collection::vec(-60.0f64..40.0, 1..200)) {
        data.sort_by(f64::total_cmp);
        let curve = survival_curve(&data, 0.1);
        prop_assert_eq!(curve[0].1, 1.0);
        prop_assert_eq!(curve[curve.len() - 1].1, 0.0);
        prop_assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 > w[0].0));
    }

    #[test]
    fn quantiles_ignore_sample_order(
        data in prop::collection::vec(-60.0f64..40.0, 1..200),
        q in 0.001f64..1.0,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let mut shuffled = data;
        shuffled.shuffle(&mut indoor_mimo::rng::from_seed(seed));
        shuffled.sort_by(f64::total_cmp);
        prop_assert_eq!(lower_quantile(&sorted, q), lower_quantile(&shuffled, q));
    }
}
