//! Independent reference values used by the integration tests. Nothing here
//! calls into the engine or the walk simulator.

#![allow(dead_code)]

/// Exact absorption probabilities of one particle on the segment `[-n, n]`
/// of `Z`, started active at the origin, solved by Gauss-Seidel on the
/// first-step equations.
pub struct SegmentChain {
    /// Probability that the particle ends asleep at the origin.
    pub sleeps_at_origin: f64,
    /// Probability that a particle leaving the origin comes back before it
    /// sleeps elsewhere or is killed.
    pub return_probability: f64,
}

impl SegmentChain {
    pub fn solve(n: usize, lambda: f64) -> Self {
        let p_s = lambda / (1.0 + lambda);
        let p_j = 1.0 - p_s;
        let len = 2 * n + 1;
        let at = |v: &[f64], i: isize| if i < 0 || i >= len as isize { 0.0 } else { v[i as usize] };

        // h(x) = p_s [x = 0] + p_j (h(x-1) + h(x+1)) / 2
        let mut h = vec![0.0; len];
        // r(x) = p_j (r(x-1) + r(x+1)) / 2 off the origin, r(0) = 1
        let mut r = vec![0.0; len];
        r[n] = 1.0;
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            for i in 0..len {
                let ii = i as isize;
                let hn = if i == n { p_s } else { 0.0 } + p_j * 0.5 * (at(&h, ii - 1) + at(&h, ii + 1));
                delta = delta.max((hn - h[i]).abs());
                h[i] = hn;
                if i != n {
                    let rn = p_j * 0.5 * (at(&r, ii - 1) + at(&r, ii + 1));
                    delta = delta.max((rn - r[i]).abs());
                    r[i] = rn;
                }
            }
            if delta < 1e-16 {
                break;
            }
        }
        SegmentChain {
            sleeps_at_origin: h[n],
            return_probability: 0.5 * (r[n - 1] + r[n + 1]),
        }
    }

    /// `P(Ch >= k)`: every further chance needs one more return.
    pub fn chance_tail(&self, k: u32) -> f64 {
        self.return_probability.powi(k as i32 - 1)
    }
}

/// `E[R(Z^d)] = G(0) - 1` with `G(0) = ∫_0^∞ (e^{-t/d} I_0(t/d))^d dt`, by
/// Simpson quadrature plus the analytic Gaussian tail.
pub fn expected_returns_oracle(d: usize) -> f64 {
    fn scaled_i0(x: f64) -> f64 {
        if x < 30.0 {
            let (mut term, mut sum) = (1.0, 1.0);
            let q = x * x / 4.0;
            for k in 1..200 {
                term *= q / (k as f64 * k as f64);
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            sum * (-x).exp()
        } else {
            let (mut term, mut sum) = (1.0, 1.0);
            for k in 1..12 {
                let a = (2 * k - 1) as f64;
                term *= a * a / (8.0 * x * k as f64);
                sum += term;
            }
            sum / (2.0 * std::f64::consts::PI * x).sqrt()
        }
    }
    let df = d as f64;
    let f = |t: f64| scaled_i0(t / df).powi(d as i32);
    let t_max = 4000.0;
    let steps = 400_000;
    let h = t_max / steps as f64;
    let mut s = f(0.0) + f(t_max);
    for i in 1..steps {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let half = df / 2.0;
    let tail = (df / (2.0 * std::f64::consts::PI)).powf(half) * t_max.powf(1.0 - half) / (half - 1.0);
    s * h / 3.0 + tail - 1.0
}
