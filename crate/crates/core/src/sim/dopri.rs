//! Dormand–Prince 5(4) with step-size control and continuous output.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// States whose max-norm exceeds this are treated as escaping.
pub const ESCAPE_NORM: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct DopriOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
}

impl Default for DopriOptions {
    fn default() -> Self {
        DopriOptions { rtol: 1e-8, atol: 1e-10, max_steps: 1_000_000, h_init: None, h_max: None }
    }
}

/// Step statistics. `error_estimate` sums the max-norm local error
/// estimates of all accepted steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub error_estimate: f64,
    pub h_min: f64,
    pub h_last: f64,
    pub t_reached: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stop<E> {
    StepSizeUnderflow { t: f64, h: f64 },
    NonFinite { t: f64 },
    Escape { t: f64, norm: f64 },
    MaxSteps { t: f64 },
    Rhs { t: f64, error: E },
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rms_scaled(v: &[f64], y0: &[f64], y1: &[f64], o: &DopriOptions) -> f64 {
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / v.len().max(1) as f64).sqrt()
}

/// Integrates `y' = f(y)` from `y0` over `[0, t_end]`, calling `report(t, y)`
/// at each of the nondecreasing times in `report_times` that lie in the
/// integrated range. Returns the step statistics and the reason for an early
/// stop, if any.
pub fn integrate<E, F, R>(
    mut f: F,
    y0: &[f64],
    t_end: f64,
    report_times: &[f64],
    opts: &DopriOptions,
    mut report: R,
) -> (StepStats, Option<Stop<E>>)
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    R: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let mut stats = StepStats { h_min: f64::INFINITY, ..Default::default() };
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut next_report = 0;
    while next_report < report_times.len() && report_times[next_report] <= 0.0 {
        report(report_times[next_report], &y);
        next_report += 1;
    }
    if !y.iter().all(|v| v.is_finite()) {
        return (stats, Some(Stop::NonFinite { t }));
    }
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut cont = vec![vec![0.0; n]; 5];

    macro_rules! eval {
        ($y:expr, $out:expr, $t:expr) => {{
            stats.evaluations += 1;
            if let Err(error) = f($y, $out) {
                stats.t_reached = t;
                return (stats, Some(Stop::Rhs { t: $t, error }));
            }
        }};
    }

    eval!(&y, &mut k1, t);
    let h_max = opts.h_max.unwrap_or(t_end).min(t_end);
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            // initial step from the local scale of y and y'
            let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
            let d0 = (y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
            let d1 = (k1.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(h_max);
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k1[i];
            }
            eval!(&ytmp, &mut k2, t + h0);
            let d2 = (k2
                .iter()
                .zip(&k1)
                .zip(&sk)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                / n.max(1) as f64)
                .sqrt()
                / h0;
            let m = d1.max(d2);
            let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
            (100.0 * h0).min(h1).min(h_max)
        }
    };
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            stats.t_reached = t;
            return (stats, Some(Stop::MaxSteps { t }));
        }
        if t + 1.01 * h >= t_end {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            stats.t_reached = t;
            return (stats, Some(Stop::StepSizeUnderflow { t, h }));
        }
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        eval!(&ytmp, &mut k2, t + C2 * h);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        eval!(&ytmp, &mut k3, t + C3 * h);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        eval!(&ytmp, &mut k4, t + C4 * h);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        eval!(&ytmp, &mut k5, t + C5 * h);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        eval!(&ytmp, &mut k6, t + h);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        eval!(&y1, &mut k7, t + h);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let finite = y1.iter().chain(&k7).all(|v| v.is_finite());
        let e = if finite { rms_scaled(&err, &y, &y1, opts) } else { f64::INFINITY };

        if e <= 1.0 {
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if h == t_end - t { t_end } else { t + h };
            while next_report < report_times.len() && report_times[next_report] <= t_new {
                let tr = report_times[next_report];
                if tr == t_new {
                    report(tr, &y1);
                } else {
                    let s = (tr - t) / h;
                    let s1 = 1.0 - s;
                    for i in 0..n {
                        ytmp[i] = cont[0][i]
                            + s * (cont[1][i] + s1 * (cont[2][i] + s * (cont[3][i] + s1 * cont[4][i])));
                    }
                    report(tr, &ytmp);
                }
                next_report += 1;
            }
            stats.accepted += 1;
            stats.error_estimate += max_norm(&err);
            stats.h_min = stats.h_min.min(h);
            stats.h_last = h;
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            stats.t_reached = t;
            let norm = max_norm(&y);
            if norm > ESCAPE_NORM {
                return (stats, Some(Stop::Escape { t, norm }));
            }
            let grow = if e == 0.0 { 10.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 10.0) };
            let grow = if last_rejected { grow.min(1.0) } else { grow };
            h = (h * grow).min(h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= if e.is_finite() { (0.9 * e.powf(-0.2)).max(0.2) } else { 0.1 };
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return (stats, Some(Stop::NonFinite { t }));
    }
    (stats, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<F: FnMut(&[f64], &mut [f64]) -> Result<(), ()>>(
        f: F,
        y0: &[f64],
        t_end: f64,
        times: &[f64],
        opts: &DopriOptions,
    ) -> (Vec<(f64, Vec<f64>)>, StepStats, Option<Stop<()>>) {
        let mut out = Vec::new();
        let (s, stop) = integrate(f, y0, t_end, times, opts, |t, y| out.push((t, y.to_vec())));
        (out, s, stop)
    }

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let (out, stats, stop) = run(
            |y, d| {
                d[0] = -y[0];
                Ok(())
            },
            &[1.0],
            1.0,
            &times,
            &DopriOptions::default(),
        );
        assert!(stop.is_none());
        assert_eq!(out.len(), 11);
        for (t, y) in &out {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "{t} {}", y[0]);
        }
        assert_eq!(stats.t_reached, 1.0);
    }

    #[test]
    fn dense_output_between_steps_is_accurate() {
        // few large steps, many report points
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let opts = DopriOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let (out, stats, _) = run(
            |y, d| {
                d[0] = y[1];
                d[1] = -y[0];
                Ok(())
            },
            &[1.0, 0.0],
            10.0,
            &times,
            &opts,
        );
        assert!(stats.accepted < 1000);
        let worst = out.iter().map(|(t, y)| (y[0] - t.cos()).abs().max((y[1] + t.sin()).abs())).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn finite_escape_is_reported() {
        // y' = y², y(0) = 1 escapes at t = 1
        let (_, _, stop) = run(
            |y, d| {
                d[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            2.0,
            &[],
            &DopriOptions::default(),
        );
        match stop {
            Some(Stop::Escape { t, .. }) | Some(Stop::StepSizeUnderflow { t, .. }) => {
                assert!((t - 1.0).abs() < 1e-3, "{t}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rhs_errors_stop_the_run() {
        let (_, _, stop) = run(
            |y, d| {
                if y[0] > 2.0 {
                    return Err(());
                }
                d[0] = 1.0;
                Ok(())
            },
            &[0.0],
            5.0,
            &[],
            &DopriOptions::default(),
        );
        assert!(matches!(stop, Some(Stop::Rhs { .. })));
    }
}
