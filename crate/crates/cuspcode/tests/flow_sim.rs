use cuspcode::boundary_geometry::{busemann, BoundaryPoint, HalfSpacePoint, Vect};
use cuspcode::coding_builder::{branch_builders, BranchSystem, BuilderArgs};
use cuspcode::flow_sim::*;
use cuspcode::spectral_engine::*;
use cuspcode::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::{Arc, OnceLock};

fn system(builder: &str, params: &str) -> Arc<BranchSystem> {
    let args = BuilderArgs { params: toml::from_str(params).unwrap(), group: None };
    Arc::new(branch_builders().create(builder, &args).unwrap().build().unwrap().system)
}

struct Gauss {
    sys: Arc<BranchSystem>,
    report: SpectralReport,
}

fn gauss() -> &'static Gauss {
    static G: OnceLock<Gauss> = OnceLock::new();
    G.get_or_init(|| {
        let sys = system("gauss", "");
        let d = DiscSpec::new("collocation-linear", 400, 1e-8).build(sys.clone()).unwrap();
        let report = spectral_report(&d, 1.0, 1.0, &PowerOptions::default()).unwrap();
        Gauss { sys, report }
    })
}

fn susp(floor: f64) -> Suspension {
    Suspension::new(gauss().sys.clone(), floor).unwrap()
}

const LEVY: f64 = std::f64::consts::PI * std::f64::consts::PI / (6.0 * std::f64::consts::LN_2);

// Roof-weighted Gauss measure: density -2 ln x / ((1 + x) ln 2) / LEVY on (0, 1).
// Integrals of f against it with the substitution x = e^{-v}.
fn weighted_integral(f: impl Fn(f64) -> f64, upper: f64) -> f64 {
    let v_lo = -upper.ln();
    let v_hi = 60.0;
    let n = 20_000;
    let h = (v_hi - v_lo) / n as f64;
    let g = |v: f64| {
        let x = (-v).exp();
        f(x) * 2.0 * v / ((1.0 + x) * std::f64::consts::LN_2 * LEVY) * x
    };
    let mut s = g(v_lo) + g(v_hi);
    for k in 1..n {
        s += g(v_lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn weighted_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        weighted_integral(|_| 1.0, x.min(1.0))
    }
}

fn ks_against(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn samples(n: usize, seed: u64) -> Vec<PhasePoint> {
    let g = gauss();
    sample_phase(&susp(0.0), &g.report, n, seed, &SampleOptions::default()).unwrap().0
}

#[test]
fn oracle_density_is_normalized() {
    assert!((weighted_cdf(1.0) - 1.0).abs() < 1e-9);
}

#[test]
fn mean_roof_matches_levy_constant() {
    let g = gauss();
    let s = susp(0.0);
    assert!((mean_roof(&s, &g.report) - LEVY).abs() < 1e-3);
    // roof at nu-distributed points, before the roof weighting
    let sampler = PhaseSampler::new(&s, &g.report, SampleOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rs: Vec<f64> = (0..20_000).map(|_| s.roof(&sampler.base_point(&mut rng)).unwrap()).collect();
    let n = rs.len() as f64;
    let m = rs.iter().sum::<f64>() / n;
    let se = (rs.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((m - LEVY).abs() < 2.0 * se, "mean {m} se {se}");
}

#[test]
fn gauss_roof_is_log_derivative() {
    let s = susp(0.0);
    for x in [0.9, 0.5, 0.3, 0.01, 1e-6] {
        assert!((s.roof(&Vect::new1(x)).unwrap() + 2.0 * f64::ln(x)).abs() < 1e-9);
    }
}

#[test]
fn zero_time_is_identity() {
    let s = susp(0.0);
    for p in samples(200, 1) {
        assert_eq!(s.evolve(&p, 0.0).unwrap(), p);
    }
}

#[test]
fn semiflow_is_additive() {
    let s = susp(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for p in samples(1000, 2) {
        let t = rng.random_range(0.0..6.0);
        let u = rng.random_range(0.0..6.0);
        let a = s.evolve(&s.evolve(&p, t).unwrap(), u).unwrap();
        let b = s.evolve(&p, t + u).unwrap();
        worst = worst.max((a.s - b.s).abs()).max(a.x.dist(&b.x));
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn heights_stay_under_the_roof() {
    let s = susp(0.0);
    for p in samples(300, 4) {
        let q = s.evolve(&p, 7.3).unwrap();
        let r = s.roof(&q.x).unwrap();
        assert!(q.s >= 0.0 && q.s < r);
    }
}

#[test]
fn consumed_roofs_respect_contraction_bound() {
    // digits {2, 3}: sup |g'| = 1/4, so every roof is at least log 4
    let sys = system("finite-alphabet", "digits = [2, 3]");
    let d = DiscSpec::new("collocation-linear", 300, 1e-10).build(sys.clone()).unwrap();
    let est = estimate_delta(&d, &DeltaOptions::default()).unwrap();
    let report = spectral_report(&d, est.delta, est.delta, &PowerOptions::default()).unwrap();
    let s = Suspension::new(sys, 0.0).unwrap();
    let opts = SampleOptions { chain: Chain::Backward, ..SampleOptions::default() };
    let (ps, _) = sample_phase(&s, &report, 300, 5, &opts).unwrap();
    for p in ps {
        let ev = s.evolve_tracked(&p, 20.0).unwrap();
        assert!(ev.steps > 0);
        assert!(ev.roof_min >= 4f64.ln() - 1e-12, "{}", ev.roof_min);
    }
}

#[test]
fn gauss_roofs_are_nonnegative() {
    let s = susp(0.0);
    for p in samples(300, 6) {
        let ev = s.evolve_tracked(&p, 10.0).unwrap();
        assert!(ev.roof_min >= 0.0);
    }
}

#[test]
fn semiconjugacy_residual_is_roundoff() {
    let s = susp(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for p in samples(1000, 7) {
        let t = rng.random_range(0.0..8.0);
        worst = worst.max(semiconjugacy_residual(&s, &p, t).unwrap());
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn projection_from_infinity_with_zero_height_is_on_unit_horosphere() {
    for x in [0.0, 0.3, 0.99] {
        let p = PhasePoint { x: Vect::new1(x), x_minus: BoundaryPoint::Infinity, s: 0.0 };
        let u = factor_project(&p).unwrap();
        let o = HalfSpacePoint::origin(1);
        assert!(busemann(&BoundaryPoint::Infinity, &o, &u.base).abs() < 1e-14);
        assert!((u.base.base.get(0) - x).abs() < 1e-15);
    }
}

#[test]
fn time_change_vanishes_at_origin() {
    for s in [0.0, 0.7, 3.0] {
        let p = PhasePoint { x: Vect::new1(0.0), x_minus: BoundaryPoint::Finite(Vect::new1(-2.0)), s };
        assert_eq!(factor_project(&p).unwrap().hopf, s);
    }
    let p = PhasePoint { x: Vect::new2(0.0, 0.0), x_minus: BoundaryPoint::Infinity, s: 1.5 };
    assert_eq!(factor_project(&p).unwrap().hopf, 1.5);
}

proptest! {
    #[test]
    fn projected_point_lies_on_geodesic_at_hopf_time(
        x in -3.0f64..3.0, y in -3.0f64..3.0, a in -3.0f64..3.0, b in -3.0f64..3.0, s in -4.0f64..4.0
    ) {
        prop_assume!((x - a).hypot(y - b) > 1e-3);
        let xv = Vect::new2(x, y);
        let xm = Vect::new2(a, b);
        let u = factor_project(&PhasePoint { x: xv, x_minus: BoundaryPoint::Finite(xm), s }).unwrap();
        let o = HalfSpacePoint::origin(2);
        // on the hemisphere over the segment from x_minus to x
        let c = (xv + xm).scale(0.5);
        let rho = 0.5 * xv.dist(&xm);
        let on_sphere = (u.base.base - c).norm2() + u.base.height.powi(2) - rho * rho;
        prop_assert!(on_sphere.abs() < 1e-9 * (1.0 + rho * rho));
        let off_line = {
            let e = (xm - xv).scale(1.0 / xv.dist(&xm));
            let w = u.base.base - xv;
            (w - e.scale(w.dot(&e))).norm()
        };
        prop_assert!(off_line < 1e-9 * (1.0 + rho));
        let t = busemann(&BoundaryPoint::Finite(xv), &o, &u.base);
        prop_assert!((t - u.hopf).abs() < 1e-8 * (1.0 + u.hopf.abs()));
    }

    #[test]
    fn evolve_rejects_negative_time(t in -10.0f64..-1e-12) {
        let s = susp(0.0);
        let p = PhasePoint { x: Vect::new1(0.4), x_minus: BoundaryPoint::Infinity, s: 0.0 };
        prop_assert!(matches!(s.evolve(&p, t), Err(Error::Invalid(_))));
    }
}

#[test]
fn point_outside_cells_escapes() {
    let s = susp(0.0);
    let p = PhasePoint { x: Vect::new1(0.0), x_minus: BoundaryPoint::Infinity, s: 0.0 };
    assert_eq!(s.evolve(&p, 1.0).unwrap_err().class(), "escape");
    let p = PhasePoint { x: Vect::new1(1.5), x_minus: BoundaryPoint::Infinity, s: 0.0 };
    assert_eq!(s.evolve(&p, 1.0).unwrap_err().class(), "escape");
}

#[test]
fn sampling_is_deterministic_per_stream() {
    let g = gauss();
    let s = susp(0.0);
    let sampler = PhaseSampler::new(&s, &g.report, SampleOptions::default()).unwrap();
    let a = samples(50, 11);
    let b = samples(80, 11);
    assert_eq!(a[..], b[..50]);
    assert_eq!(sampler.sample(11, 17).unwrap().0, a[17]);
    assert_ne!(samples(50, 12)[0], a[0]);
}

#[test]
fn sampled_measure_matches_roof_weighted_gauss() {
    let n = 4000;
    let mut xs: Vec<f64> = samples(n, 13).iter().map(|p| p.x.get(0)).collect();
    let d = ks_against(&mut xs, weighted_cdf);
    // 0.1% critical value
    assert!(d < 1.95 / (n as f64).sqrt(), "{d}");
}

#[test]
fn flow_preserves_the_measure() {
    let n = 4000;
    let s = susp(0.0);
    let ps = samples(n, 14);
    for t in [0.8, 3.0, 11.0] {
        let mut xs: Vec<f64> = ps.iter().map(|p| s.evolve(p, t).unwrap().x.get(0)).collect();
        let d = ks_against(&mut xs, weighted_cdf);
        assert!(d < 1.95 / (n as f64).sqrt(), "t {t}: {d}");
    }
    // heights are uniform under the roof
    let mut us: Vec<f64> = ps
        .iter()
        .map(|p| {
            let q = s.evolve(p, 2.0).unwrap();
            q.s / s.roof(&q.x).unwrap()
        })
        .collect();
    assert!(ks_against(&mut us, |u| u.clamp(0.0, 1.0)) < 1.95 / (n as f64).sqrt());
}

#[test]
fn birkhoff_average_matches_space_average() {
    // time average of x along one long orbit against the roof-weighted mean
    let s = susp(0.0);
    let mut x = Vect::new1(0.318_309_886_183_790_7);
    let mut xm = BoundaryPoint::Infinity;
    let batches = 20;
    let per = 50_000;
    let mut means = vec![];
    for _ in 0..batches {
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..per {
            let (y, ym, _, r) = s.skew(&x, &xm).unwrap();
            num += x.get(0) * r;
            den += r;
            x = y;
            xm = ym;
        }
        means.push(num / den);
    }
    let m = means.iter().sum::<f64>() / batches as f64;
    let se = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
    let exact = weighted_integral(|x| x, 1.0);
    assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact}, se {se}");
}

#[test]
fn escape_rate_falls_with_the_floor() {
    let g = gauss();
    let ps = samples(2000, 15);
    let rates: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|f| {
            let s = Suspension::new(g.sys.clone(), *f).unwrap();
            ps.iter().filter(|p| matches!(s.evolve(p, 6.0), Err(Error::Escape(_)))).count() as f64 / ps.len() as f64
        })
        .collect();
    assert!(rates[0] > rates[1] && rates[1] > rates[2] && rates[0] > 0.05, "{rates:?}");
    // without a floor nothing escapes
    let s = susp(0.0);
    assert!(ps.iter().all(|p| s.evolve(p, 6.0).is_ok()));
}

#[test]
fn truncated_sampling_restarts_on_escape() {
    let g = gauss();
    let s = Suspension::new(g.sys.clone(), 1e-3).unwrap();
    let opts = SampleOptions { burn_in: 10, ..SampleOptions::default() };
    let (ps, st) = sample_phase(&s, &g.report, 50, 16, &opts).unwrap();
    assert!(st.escapes > 0);
    for p in ps {
        assert!(s.roof(&p.x).is_ok());
    }
}

#[test]
fn constant_observable_has_zero_correlation() {
    let g = gauss();
    let o = CorrelationOptions::new(CorrelationOptions::grid(4.0, 1.0).unwrap(), 2000, 1);
    let c = correlation(&susp(0.0), &g.report, &Observable::Constant { value: 2.5 }, &Observable::Coordinate { axis: 0 }, &o).unwrap();
    assert!(c.rho.iter().all(|r| r.abs() < 1e-12), "{:?}", c.rho);
    assert!(c.degenerate && c.fitted_eta.is_none());
}

#[test]
fn coordinate_correlation_decays() {
    let g = gauss();
    let o = CorrelationOptions::new(CorrelationOptions::grid(12.0, 0.5).unwrap(), 100_000, 1);
    let x = Observable::Coordinate { axis: 0 };
    let c = correlation(&susp(0.0), &g.report, &x, &x, &o).unwrap();
    // variance of x under the roof-weighted Gauss measure
    let m = weighted_integral(|x| x, 1.0);
    let var = weighted_integral(|x| (x - m).powi(2), 1.0);
    assert!((c.rho[0] - var).abs() < 4.0 * c.stderr[0], "{} vs {var}", c.rho[0]);
    assert!(c.fitted_eta.unwrap() > 0.0 && c.fit_r2.unwrap() > 0.8);
    assert_eq!(c.window[0], 0);
    assert!(c.rho[c.window.len() - 1].abs() < c.rho[0]);
    assert_eq!(c.samples, 100_000);
    assert_eq!(c.escaped, 0);
    let csv = c.to_csv();
    assert_eq!(csv.lines().count(), c.times.len() + 1);
    assert!(csv.starts_with("t,rho,stderr\n"));
    let back: CorrelationSeries = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back.rho, c.rho);
}

#[test]
fn correlation_validates_inputs() {
    let g = gauss();
    let s = susp(0.0);
    let x = Observable::Coordinate { axis: 0 };
    let bad_axis = Observable::Coordinate { axis: 1 };
    let o = CorrelationOptions::new(vec![0.0, 1.0], 100, 1);
    assert_eq!(correlation(&s, &g.report, &bad_axis, &x, &o).unwrap_err().class(), "invalid");
    let o = CorrelationOptions::new(vec![1.0, 0.5], 100, 1);
    assert_eq!(correlation(&s, &g.report, &x, &x, &o).unwrap_err().class(), "invalid");
    let o = CorrelationOptions::new(vec![0.0], 10, 1);
    assert_eq!(correlation(&s, &g.report, &x, &x, &o).unwrap_err().class(), "invalid");
    assert!(CorrelationOptions::grid(1.0, 0.0).is_err());
    assert_eq!(CorrelationOptions::grid(12.0, 0.5).unwrap().len(), 25);
}

#[test]
fn observables_parse_from_toml() {
    let o: Observable = toml::from_str("kind = \"cosine\"\naxis = 0\nfreq = 2.0").unwrap();
    assert_eq!(o, Observable::Cosine { axis: 0, freq: 2.0 });
    assert!((o.lipschitz() - 4.0 * std::f64::consts::PI).abs() < 1e-15);
    assert!(toml::from_str::<Observable>("kind = \"coordinate\"\naxis = 0\nextra = 1").is_err());
}

#[test]
fn backward_chain_samples_the_same_measure() {
    let g = gauss();
    let s = susp(0.0);
    // branches down to n = 1000: the chain cannot reach x < 1/1001, about 1% of the weighted mass
    let opts = SampleOptions { chain: Chain::Backward, burn_in: 8, chain_floor: 1e-6, ..SampleOptions::default() };
    let n = 1000;
    let (ps, _) = sample_phase(&s, &g.report, n, 17, &opts).unwrap();
    let mut xs: Vec<f64> = ps.iter().map(|p| p.x.get(0)).collect();
    assert!(ks_against(&mut xs, weighted_cdf) < 1.95 / (n as f64).sqrt());
    // the past lies on the negative side for the Gauss branches
    assert!(ps.iter().all(|p| p.x_minus.finite().is_some_and(|v| v.get(0) <= -1.0 + 1e-12)));
    let mut worst: f64 = 0.0;
    for p in ps.iter().take(300) {
        worst = worst.max(semiconjugacy_residual(&s, p, 5.0).unwrap());
    }
    assert!(worst < 1e-8, "{worst}");
}
