use std::f64::consts::SQRT_2;

use super::ModelError;

/// Standard Gaussian tail `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Inverse of [`gaussian_tail`] on `(0, 1)`: Acklam's rational approximation
/// polished with Halley steps against `erfc`.
pub fn gaussian_tail_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    // lower-tail quantile of 1 - p, then negate
    let mut x = -acklam_quantile(p);
    for _ in 0..3 {
        let err = gaussian_tail(x) - p;
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf == 0.0 {
            break;
        }
        // Q'(x) = -pdf, Q''(x) = x * pdf
        let newton = err / pdf;
        x += newton / (1.0 - 0.5 * x * newton);
    }
    x
}

fn acklam_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// False-alarm probability of an energy detector that holds its detection
/// probability at `target_pd` while sensing for `tau` seconds at `fs` Hz with
/// linear SNR `snr`.
pub fn false_alarm_for_sensing_time(
    tau: f64,
    fs: f64,
    snr: f64,
    target_pd: f64,
) -> Result<f64, ModelError> {
    for (name, value) in [("tau", tau), ("fs", fs), ("snr", snr)] {
        if !(value > 0.0) {
            return Err(ModelError::NonPositive { name, value });
        }
    }
    if !(target_pd > 0.0 && target_pd < 1.0) {
        return Err(ModelError::InvalidProbability {
            name: "target_pd",
            value: target_pd,
        });
    }
    let arg = (2.0 * snr + 1.0).sqrt() * gaussian_tail_inv(target_pd) + (tau * fs).sqrt() * snr;
    Ok(gaussian_tail(arg).clamp(0.0, 1.0))
}

/// Detector regime used to map sensing time onto `(P_fa, P_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub fs_hz: f64,
    pub snr_db: f64,
    pub target_pd: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            fs_hz: 6e6,
            snr_db: -15.0,
            target_pd: 0.9,
        }
    }
}

impl DetectorModel {
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// `(P_fa, P_d)` at sensing time `tau`.
    pub fn operating_point(&self, tau: f64) -> Result<(f64, f64), ModelError> {
        let p_fa = false_alarm_for_sensing_time(tau, self.fs_hz, self.snr_linear(), self.target_pd)?;
        Ok((p_fa, self.target_pd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Tail integral of the standard normal density by composite Simpson.
    fn tail_by_quadrature(x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - tail_by_quadrature(-x);
        }
        let upper = x + 40.0;
        let n = 400_000;
        let h = (upper - x) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(x) + pdf(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(x + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn tail_inv_by_bisection(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail_by_quadrature(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn tail_matches_quadrature() {
        for &x in &[-2.0, -0.3, 0.0, 0.5, 1.128, 2.5, 5.0] {
            let q = gaussian_tail(x);
            assert_relative_eq!(q, tail_by_quadrature(x), max_relative = 1e-10);
        }
        assert_relative_eq!(gaussian_tail_inv(0.9), tail_inv_by_bisection(0.9), epsilon = 1e-9);
    }

    #[test]
    fn tail_matches_high_precision_reference() {
        // 30-digit erfc values
        let reference = [
            (-2.0, 0.977249868051820792799717362833),
            (-1.0, 0.841344746068542948585232545632),
            (0.5, 0.308537538725986896362295389392),
            (2.5, 0.00620966532577613516697810457419),
            (5.0, 2.86651571879193911673752332875e-7),
        ];
        for (x, q) in reference {
            assert_relative_eq!(gaussian_tail(x), q, max_relative = 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips() {
        for &p in &[1e-12, 1e-6, 0.01, 0.1, 0.3, 0.5, 0.77, 0.9, 0.999, 1.0 - 1e-9] {
            let x = gaussian_tail_inv(p);
            assert_relative_eq!(gaussian_tail(x), p, max_relative = 1e-12);
        }
        assert_relative_eq!(gaussian_tail_inv(0.1), 1.28155156554460059348744828852, max_relative = 1e-13);
    }

    #[test]
    fn operating_point_at_one_millisecond() {
        // 40-digit reference: Q(sqrt(2g+1) Q^-1(0.9) + sqrt(6000) g), g = 10^-1.5
        const FROZEN: f64 = 0.129_652_941_071_025_1;
        let snr = 10f64.powf(-1.5);
        let impl_value = false_alarm_for_sensing_time(1e-3, 6e6, snr, 0.9).unwrap();
        assert_relative_eq!(impl_value, FROZEN, max_relative = 1e-12);

        let arg = (2.0 * snr + 1.0).sqrt() * tail_inv_by_bisection(0.9) + (6000f64).sqrt() * snr;
        assert_relative_eq!(tail_by_quadrature(arg), FROZEN, max_relative = 1e-8);
    }

    #[test]
    fn vanishes_for_long_sensing() {
        let snr = 10f64.powf(-1.5);
        let p = false_alarm_for_sensing_time(10.0, 6e6, snr, 0.9).unwrap();
        assert!(p < 1e-300 || p == 0.0);
    }

    #[test]
    fn continuous_near_zero_sensing_time() {
        let snr = 10f64.powf(-1.5);
        let limit = gaussian_tail((2.0 * snr + 1.0).sqrt() * gaussian_tail_inv(0.9));
        let p = false_alarm_for_sensing_time(1e-14, 6e6, snr, 0.9).unwrap();
        assert!((p - limit).abs() < 1e-4);
        assert!(limit > 0.9, "short sensing cannot beat the detection target");
    }

    #[test]
    fn non_increasing_in_tau() {
        let d = DetectorModel::default();
        let mut last = 1.0;
        for i in 1..2000 {
            let (p, _) = d.operating_point(i as f64 * 1e-5).unwrap();
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(false_alarm_for_sensing_time(0.0, 6e6, 0.1, 0.9).is_err());
        assert!(false_alarm_for_sensing_time(1e-3, 6e6, 0.1, 1.0).is_err());
        assert!(false_alarm_for_sensing_time(1e-3, -1.0, 0.1, 0.9).is_err());
    }
}
