use num_complex::Complex64;

// B_2, B_4, ..., B_16
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

#[inline]
fn cpow_neg(q: f64, s: Complex64) -> Complex64 {
    // q^{-s} for q > 0
    (-s * q.ln()).exp()
}

/// Hurwitz zeta sum_{k>=0} (q+k)^{-s} for Re s > 1 and q > 0, by Euler-Maclaurin.
pub fn hurwitz_zeta(s: Complex64, q: f64) -> Complex64 {
    debug_assert!(q > 0.0);
    debug_assert!(s.re > 1.0, "hurwitz_zeta needs Re s > 1, got {s}");
    let m = (s.norm().max(10.0) + 10.0).ceil() as usize;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..m {
        sum += cpow_neg(q + k as f64, s);
    }
    let a = q + m as f64;
    let a_s = cpow_neg(a, s);
    sum += a_s * a / (s - 1.0);
    sum += a_s * 0.5;
    // sum_j B_2j/(2j)! * s(s+1)...(s+2j-2) * a^{-s-2j+1}
    let mut rising = s; // s(s+1)...(s+2j-2)
    let mut fact = 2.0; // (2j)!
    let mut apow = a_s / a; // a^{-s-2j+1}
    for (j, b) in BERNOULLI.iter().enumerate() {
        let term = rising * apow * (*b / fact);
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
        let jj = (j + 1) as f64;
        rising *= (s + (2.0 * jj - 1.0)) * (s + 2.0 * jj);
        fact *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
        apow /= a * a;
    }
    sum
}

pub fn hurwitz_zeta_real(s: f64, q: f64) -> f64 {
    hurwitz_zeta(Complex64::new(s, 0.0), q).re
}

/// sum_{n >= n_start} (n + c)^m ((n + c)^2 + e^2)^{-sigma} for m in {0, 1}.
///
/// Terms are added one by one until n + c is large against e and |sigma|, then the rest is
/// closed by a binomial expansion into Hurwitz zeta values. Needs Re(2 sigma) - m > 1.
pub fn lattice_ray_sum(c: f64, e: f64, sigma: Complex64, m: i32, n_start: i64) -> Complex64 {
    debug_assert!(2.0 * sigma.re - m as f64 > 1.0);
    let e2 = e * e;
    let threshold = if e == 0.0 { 1.0 } else { (2.0 * e).max(e * sigma.norm().sqrt() * 2.0).max(1.0) };
    let mut n = n_start;
    let mut sum = Complex64::new(0.0, 0.0);
    while (n as f64 + c) < threshold {
        let x = n as f64 + c;
        let base = x * x + e2;
        let mut t = cpow_neg(base, sigma);
        if m == 1 {
            t *= x;
        }
        sum += t;
        n += 1;
    }
    let q = n as f64 + c;
    if e == 0.0 {
        return sum + hurwitz_zeta(2.0 * sigma - m as f64, q);
    }
    // (1 + e^2/x^2)^{-sigma} = sum_j binom(-sigma, j) (e^2/x^2)^j
    let mut binom = Complex64::new(1.0, 0.0);
    let mut epow = 1.0;
    let mut first = None;
    for j in 0..80 {
        let z = hurwitz_zeta(2.0 * sigma + 2.0 * j as f64 - m as f64, q);
        let term = binom * epow * z;
        sum += term;
        let f = *first.get_or_insert(term.norm());
        if j > 0 && term.norm() < 1e-16 * f.max(1e-300) {
            break;
        }
        let jf = j as f64;
        binom *= (-sigma - jf) / (jf + 1.0);
        epow *= e2;
    }
    sum
}

/// Riemann zeta for real s > 1.
pub fn zeta(s: f64) -> f64 {
    hurwitz_zeta_real(s, 1.0)
}
