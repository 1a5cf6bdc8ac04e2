//! Fixed quadrature rules.

use crate::scalar::Scalar;

/// Composite Simpson rule with `panels` subintervals (rounded up to even).
pub fn simpson<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, panels: usize) -> T {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / T::of_usize(n);
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc += w * f(a + h * T::of_usize(i));
    }
    acc * h / T::lit(3.0)
}

/// Simpson's rule over a function that is smooth between `breaks`
/// (sorted, first and last are the integration limits). Panels are shared
/// out in proportion to piece length and endpoint samples are taken just
/// inside each piece, so one-sided limits are used at the jumps.
pub fn simpson_piecewise<T: Scalar>(f: impl Fn(T) -> T, breaks: &[T], panels: usize) -> T {
    if breaks.len() < 2 {
        return T::zero();
    }
    let total = *breaks.last().unwrap() - breaks[0];
    if total <= T::zero() {
        return T::zero();
    }
    let nudge = T::epsilon() * T::lit(1024.0);
    let mut acc = T::zero();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= T::zero() {
            continue;
        }
        let share = (len / total * T::of_usize(panels)).ceil().to_usize().unwrap_or(2);
        let inset = len * nudge;
        let g = |s: T| f(s.max(a + inset).min(b - inset));
        acc += simpson(g, a, b, share.max(2));
    }
    acc
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nn = T::of_usize(n);
    for i in 0..(n + 1) / 2 {
        let mut x = (T::PI() * (T::of_usize(i) + T::lit(0.75)) / (nn + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (T::one(), x);
            for k in 2..=n {
                let kk = T::of_usize(k);
                let p2 = ((T::lit(2.0) * kk - T::one()) * x * p1 - (kk - T::one()) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { T::one() } else { p0 };
            dp = nn * (x * pn - pm) / (x * x - T::one());
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// Gauss-Legendre rule of `n` points applied on `[a, b]`.
pub fn gauss_on<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, rule: &(Vec<T>, Vec<T>)) -> T {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<T>()
        * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 4);
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn piecewise_simpson_handles_jumps() {
        let f = |s: f64| if s < 0.5 { 0.3 } else if s < 1.0 { 0.1 } else { 0.0 };
        let v = simpson_piecewise(f, &[0.0, 0.5, 1.0], 2048);
        assert!((v - 0.2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let rule = gauss_legendre::<f64>(n);
            let wsum: f64 = rule.1.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let v = gauss_on(|x: f64| x.powi(deg as i32 - 1) * 3.0, 0.0, 1.0, &rule);
            assert!((v - 3.0 / deg as f64).abs() < 1e-12, "n={n} v={v}");
        }
    }
}
