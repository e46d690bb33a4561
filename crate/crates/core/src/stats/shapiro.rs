//! Shapiro-Wilk normality test, Royston's AS R94 formulation.
//!
//! Valid for 3 <= n <= 5000, matching the range R and scipy enforce.
//! The W statistic is the squared correlation between the ordered
//! sample and the expected normal order-statistic coefficients; the
//! p-value comes from Royston's normalizing transformations of 1 - W.

use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Result of the normality test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

// Royston (1995) polynomial constants, constant term first.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

/// Tests the sample for normality. Errors on n outside [3, 5000],
/// non-finite values, or a constant sample.
pub fn shapiro_wilk(sample: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = sample.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples {
            required: 3,
            actual: n,
        });
    }
    if n > 5000 {
        return Err(StatsError::TooManySamples {
            max: 5000,
            actual: n,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }

    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }

    let a = coefficients(n);

    // W as the squared correlation between the range-scaled order
    // statistics and the (antisymmetric) coefficient vector. The
    // coefficient at position i is -a[min+1] for the lower half and
    // +a[min+1] for the upper half, zero at an odd-length midpoint.
    let coeff_at = |i: usize| -> f64 {
        let j = n - 1 - i;
        if i == j {
            0.0
        } else {
            let v = a[i.min(j) + 1];
            if i > j {
                v
            } else {
                -v
            }
        }
    };

    let mut sx = 0.0;
    let mut sa = 0.0;
    for (i, xi) in x.iter().enumerate() {
        sx += xi / range;
        sa += coeff_at(i);
    }
    sx /= n as f64;
    sa /= n as f64;

    let mut ssa = 0.0;
    let mut ssx = 0.0;
    let mut sax = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let da = coeff_at(i) - sa;
        let dx = xi / range - sx;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }

    // computed as 1 - (1 - r^2) to keep precision for W near 1
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);

    Ok(ShapiroWilk {
        w,
        p_value: p_value(w, n),
    })
}

/// Upper-half coefficient vector, 1-based like the published algorithm.
fn coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    let mut a = vec![0.0; nn2 + 1];
    if n == 3 {
        a[1] = std::f64::consts::FRAC_1_SQRT_2;
        return a;
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let an = n as f64;
    let an25 = an + 0.25;
    let mut summ2 = 0.0;
    for (i, ai) in a.iter_mut().enumerate().skip(1) {
        *ai = normal.inverse_cdf((i as f64 - 0.375) / an25);
        summ2 += *ai * *ai;
    }
    summ2 *= 2.0;
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();

    let a1 = poly(&C1, rsn) - a[1] / ssumm2;
    let (start, fac) = if n > 5 {
        let a2 = poly(&C2, rsn) - a[2] / ssumm2;
        let fac = ((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[2] = a2;
        (3, fac)
    } else {
        let fac = ((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (2, fac)
    };
    a[1] = a1;
    for ai in a.iter_mut().skip(start).take(nn2 + 1 - start) {
        *ai /= -fac;
    }
    a
}

fn p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        // exact small-sample distribution
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        return (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0);
    }

    let an = n as f64;
    let y = (1.0 - w).ln();
    let (z, m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 1e-99;
        }
        (-((gamma - y).ln()), poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (y, poly(&C5, xx), poly(&C6, xx).exp())
    };
    normal_sf((z - m) / s)
}

/// Horner evaluation, constant term first.
fn poly(cc: &[f64], x: f64) -> f64 {
    cc.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// P(Z > z), via the lower tail at -z to stay accurate far out.
fn normal_sf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(-z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(actual: f64, expected: f64, tol: f64) -> bool {
        (actual - expected).abs() <= tol * expected.abs().max(1.0)
    }

    #[test]
    fn normal_quantiles_n30() {
        let xs = [
            -2.040281, -1.609816, -1.360873, -1.175813, -1.024106, -0.892918, -0.775547, -0.668002,
            -0.567686, -0.472789, -0.381976, -0.294213, -0.208664, -0.124617, -0.041444, 0.041444,
            0.124617, 0.208664, 0.294213, 0.381976, 0.472789, 0.567686, 0.668002, 0.775547,
            0.892918, 1.024106, 1.175813, 1.360873, 1.609816, 2.040281,
        ];
        let r = shapiro_wilk(&xs).unwrap();
        assert!(close(r.w, 0.9977832115, 1e-5), "w = {}", r.w);
        assert!(close(r.p_value, 0.9999999793, 1e-5), "p = {}", r.p_value);
    }

    #[test]
    fn bimodal_n50_rejects() {
        let xs = [
            -4.1729, -3.8726, -3.7614, -4.3422, -4.4588, -3.8062, -3.8329, -3.6937, -4.3036,
            -4.026, -4.1635, -4.4521, -4.084, -3.7951, -3.8472, -3.7981, -3.7123, -3.5161, -4.2477,
            -3.68, -3.9645, -3.6905, -4.052, -3.9391, -3.857, 3.8539, 3.8017, 4.2751, 3.9828,
            3.9313, 3.8738, 3.9613, 3.9704, 3.7721, 4.3572, 4.1355, 4.2652, 3.7966, 3.6146, 4.1667,
            4.1368, 4.026, 4.192, 4.0246, 4.2053, 4.6082, 3.3646, 3.8398, 3.9379, 3.9459,
        ];
        let r = shapiro_wilk(&xs).unwrap();
        assert!(close(r.w, 0.6936428036, 1e-5), "w = {}", r.w);
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
        assert!(close(r.p_value, 6.375556316e-09, 1e-2), "p = {}", r.p_value);
    }

    #[test]
    fn uniform_grid_n20() {
        let xs = [
            0.05, 0.0974, 0.1447, 0.1921, 0.2395, 0.2868, 0.3342, 0.3816, 0.4289, 0.4763, 0.5237,
            0.5711, 0.6184, 0.6658, 0.7132, 0.7605, 0.8079, 0.8553, 0.9026, 0.95,
        ];
        let r = shapiro_wilk(&xs).unwrap();
        assert!(close(r.w, 0.9603675849, 1e-5), "w = {}", r.w);
        assert!(close(r.p_value, 0.5512188632, 1e-4), "p = {}", r.p_value);
    }

    #[test]
    fn exponential_n12() {
        let xs = [
            1.8572, 0.4191, 0.6742, 0.1552, 0.3862, 0.2582, 0.6921, 1.2461, 1.7234, 1.0482, 0.438,
            1.212,
        ];
        let r = shapiro_wilk(&xs).unwrap();
        assert!(close(r.w, 0.9129451339, 1e-5), "w = {}", r.w);
        assert!(close(r.p_value, 0.23268525, 1e-4), "p = {}", r.p_value);
    }

    #[test]
    fn small_n8() {
        let xs = [0.1, -0.5, 0.3, 1.2, -0.8, 0.4, -0.2, 0.9];
        let r = shapiro_wilk(&xs).unwrap();
        assert!(close(r.w, 0.9797971854, 1e-5), "w = {}", r.w);
        assert!(close(r.p_value, 0.9618936149, 1e-4), "p = {}", r.p_value);
    }

    #[test]
    fn exact_n3() {
        let r = shapiro_wilk(&[1.0, 2.5, 3.1]).unwrap();
        assert!(close(r.w, 0.9423076923, 1e-6), "w = {}", r.w);
        assert!(close(r.p_value, 0.5367371251, 1e-6), "p = {}", r.p_value);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert!(matches!(
            shapiro_wilk(&[3.0; 10]),
            Err(StatsError::ZeroVariance)
        ));
        assert!(matches!(
            shapiro_wilk(&[1.0, f64::NAN, 2.0]),
            Err(StatsError::NonFinite)
        ));
        let big = vec![0.0; 5001];
        assert!(matches!(
            shapiro_wilk(&big),
            Err(StatsError::TooManySamples { .. })
        ));
    }

    #[test]
    fn w_bounded() {
        let xs = [5.0, -3.0, 2.2, 8.9, 0.1, -7.4, 3.3];
        let r = shapiro_wilk(&xs).unwrap();
        assert!((0.0..=1.0).contains(&r.w));
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}
