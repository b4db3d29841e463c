//! Magnetization moments, Binder cumulants and crossing extraction.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::magnetization;
use crate::state::StateVector;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// `(<m^2>, <m^4>)` in `state`, with `m(b) = (N - 2 popcount(b)) / (2N)`.
pub fn magnetization_moments(state: &StateVector) -> (f64, f64) {
    let n = state.n_qubits();
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for (b, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let s = magnetization(n, b as u64).powi(2);
        m2 += p * s;
        m4 += p * s * s;
    }
    (m2, m4)
}

/// `U4 = 1 - <m^4> / (3 <m^2>^2)` from already averaged moments.
pub fn binder_u4(mean_m2: f64, mean_m4: f64) -> Result<f64> {
    if !(mean_m2 > 0.0) {
        return Err(Error::InvalidArgument(format!("<m^2> must be positive, got {mean_m2}")));
    }
    let u4 = 1.0 - mean_m4 / (3.0 * mean_m2 * mean_m2);
    debug_assert!(u4 <= 2.0 / 3.0 + 1e-9, "U4 = {u4} exceeds 2/3");
    Ok(u4)
}

/// Binder cumulant of `(m2, m4)` samples and its bootstrap standard deviation.
pub fn binder_bootstrap<R: Rng + ?Sized>(samples: &[(f64, f64)], resamples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("Binder bootstrap needs at least two samples".into()));
    }
    if resamples < 100 {
        return Err(Error::InvalidArgument(format!("at least 100 resamples required, got {resamples}")));
    }
    let s = samples.len();
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| samples.iter().map(f).sum::<f64>() / s as f64;
    let u4 = binder_u4(mean(&|x| x.0), mean(&|x| x.1))?;
    let mut draws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..s {
            let (a, b) = samples[rng.random_range(0..s)];
            m2 += a;
            m4 += b;
        }
        draws.push(binder_u4(m2 / s as f64, m4 / s as f64)?);
    }
    Ok((u4, population_std(&draws)))
}

pub(crate) fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// One point of a single-size Binder curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub h_x: f64,
    pub u4: f64,
    pub error: f64,
}

/// Binder cumulants of several lattice sizes at one field value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinderPoint {
    pub h_x: f64,
    /// Lattice label to `(U4, error)`.
    pub u4_by_size: BTreeMap<String, (f64, f64)>,
    /// Exact `U4` for the sizes small enough to diagonalize.
    #[serde(default)]
    pub ed_by_size: BTreeMap<String, f64>,
    pub n_samples: usize,
}

/// Binder-scan table, columns `h_x,size,u4,error,n_samples,ed_u4`; `ed_u4` is
/// empty where no exact value is available.
pub fn write_binder_csv<W: Write>(w: W, points: &[BinderPoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["h_x", "size", "u4", "error", "n_samples", "ed_u4"])?;
    for p in points {
        for (size, (u4, err)) in &p.u4_by_size {
            csv.write_record([
                format!("{:?}", p.h_x),
                size.clone(),
                format!("{u4:?}"),
                format!("{err:?}"),
                p.n_samples.to_string(),
                p.ed_by_size.get(size).map(|e| format!("{e:?}")).unwrap_or_default(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub h_x_c: f64,
    pub error: f64,
}

/// Field values where `u4_b - u4_a` changes sign, by linear interpolation.
fn sign_changes(h: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(a, b)| b - a).collect();
    let mut out = Vec::new();
    for k in 0..d.len() {
        if d[k] == 0.0 {
            out.push(h[k]);
            continue;
        }
        if k + 1 < d.len() && d[k + 1] != 0.0 && (d[k] > 0.0) != (d[k + 1] > 0.0) {
            let t = d[k] / (d[k] - d[k + 1]);
            out.push(h[k] + t * (h[k + 1] - h[k]));
        }
    }
    out
}

/// Crossing of two Binder curves sampled on the same ascending grid.
///
/// The error is the spread of the crossing when every point is redrawn from a
/// normal distribution with its own error bar; redraws that do not cross
/// exactly once are skipped.
pub fn find_crossing<R: Rng + ?Sized>(
    a: &[CurvePoint],
    b: &[CurvePoint],
    resamples: usize,
    rng: &mut R,
) -> Result<Crossing> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("curves need the same grid of at least two points".into()));
    }
    for (k, (pa, pb)) in a.iter().zip(b).enumerate() {
        if pa.h_x != pb.h_x {
            return Err(Error::InvalidArgument(format!("grids differ at index {k}")));
        }
        if k > 0 && !(pa.h_x > a[k - 1].h_x) {
            return Err(Error::InvalidArgument("h_x grid must be strictly ascending".into()));
        }
    }
    let h: Vec<f64> = a.iter().map(|p| p.h_x).collect();
    let ua: Vec<f64> = a.iter().map(|p| p.u4).collect();
    let ub: Vec<f64> = b.iter().map(|p| p.u4).collect();
    let candidates = sign_changes(&h, &ua, &ub);
    let h_x_c = match candidates.as_slice() {
        [] => return Err(Error::NoCrossing),
        [c] => *c,
        _ => return Err(Error::AmbiguousCrossing(candidates)),
    };
    let mut draws = Vec::with_capacity(resamples);
    let mut ra = vec![0.0; h.len()];
    let mut rb = vec![0.0; h.len()];
    for _ in 0..resamples {
        for k in 0..h.len() {
            let za: f64 = StandardNormal.sample(rng);
            let zb: f64 = StandardNormal.sample(rng);
            ra[k] = a[k].u4 + za * a[k].error;
            rb[k] = b[k].u4 + zb * b[k].error;
        }
        if let [c] = sign_changes(&h, &ra, &rb).as_slice() {
            draws.push(*c);
        }
    }
    let error = if draws.len() >= 2 { population_std(&draws) } else { f64::NAN };
    Ok(Crossing { h_x_c, error })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::pauli::{Letter, PauliString, WeightedPauliSum};
    use crate::state::Cps;

    #[test]
    fn moments_of_simple_states() {
        let up = StateVector::prepare_cps(4, Cps::z(0)).unwrap();
        assert_eq!(magnetization_moments(&up), (0.25, 0.0625));

        let plus = StateVector::prepare_cps(4, Cps::x(0)).unwrap();
        let (m2, m4) = magnetization_moments(&plus);
        assert!((m2 - 1.0 / 16.0).abs() < 1e-15);
        assert!((m4 - 40.0 / 4096.0).abs() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![Complex64::new(0.0, 0.0); 16];
        amps[0] = s.into();
        amps[15] = s.into();
        let ghz = StateVector::from_amplitudes(4, amps).unwrap();
        let (m2, m4) = magnetization_moments(&ghz);
        assert!((m2 - 0.25).abs() < 1e-15 && (m4 - 0.0625).abs() < 1e-15);
    }

    /// `sum_j Z_j` raised to a power as an explicit Pauli sum, scaled by `1/(2N)^p`.
    fn m_power(n: usize, p: u32) -> WeightedPauliSum {
        // Multiply out (sum Z_j)^p on Z-masks; Z_j Z_j = I.
        let mut acc: BTreeMap<u64, f64> = BTreeMap::from([(0, 1.0)]);
        for _ in 0..p {
            let mut next = BTreeMap::new();
            for (mask, c) in &acc {
                for j in 0..n {
                    *next.entry(mask ^ (1u64 << j)).or_insert(0.0) += c;
                }
            }
            acc = next;
        }
        let scale = (2.0 * n as f64).powi(p as i32).recip();
        let terms = acc.into_iter().map(|(mask, c)| (c * scale, PauliString::from_masks(n, 0, mask).unwrap()));
        WeightedPauliSum::new(n, terms).unwrap()
    }

    #[test]
    fn moments_match_operator_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            let (m2_op, m4_op) = (m_power(n, 2), m_power(n, 4));
            for _ in 0..5 {
                let mut amps: Vec<Complex64> =
                    (0..1 << n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                amps.iter_mut().for_each(|a| *a /= norm);
                let state = StateVector::from_amplitudes(n, amps).unwrap();
                let (m2, m4) = magnetization_moments(&state);
                assert!((m2 - state.expectation(&m2_op).unwrap()).abs() < 1e-10);
                assert!((m4 - state.expectation(&m4_op).unwrap()).abs() < 1e-10);
            }
        }
        // Sanity check of the helper itself.
        assert_eq!(m_power(2, 2).to_string(), "+0.125 * I +0.125 * Z0 Z1");
        let _ = Letter::Z;
    }

    #[test]
    fn binder_limits() {
        assert!((binder_u4(0.25, 0.0625).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // Independent spins at infinite temperature, N = 4.
        assert!((binder_u4(1.0 / 16.0, 40.0 / 4096.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(binder_u4(0.3, 3.0 * 0.09).unwrap().abs() < 1e-15);
        assert!(binder_u4(0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn binder_is_scale_invariant(m2 in 0.01f64..1.0, ratio in 1.0f64..3.0, c in 0.1f64..10.0) {
            let m4 = ratio * m2 * m2;
            let a = binder_u4(m2, m4).unwrap();
            let b = binder_u4(c * c * m2, c.powi(4) * m4).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a <= 2.0 / 3.0 + 1e-12);
        }
    }

    #[test]
    fn bootstrap_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u4, err) = binder_bootstrap(&[(0.2, 0.05); 10], 200, &mut rng).unwrap();
        assert!((u4 - (1.0 - 0.05 / 0.12)).abs() < 1e-14);
        assert!(err < 1e-14);
        let (_, err) = binder_bootstrap(&[(0.1, 0.02), (0.3, 0.1)], 200, &mut rng).unwrap();
        assert!(err > 0.0);
        assert!(binder_bootstrap(&[(0.1, 0.02)], 200, &mut rng).is_err());
        assert!(binder_bootstrap(&[(0.1, 0.02); 4], 50, &mut rng).is_err());
    }

    fn curve(h: &[f64], u: &[f64], e: f64) -> Vec<CurvePoint> {
        h.iter().zip(u).map(|(&h_x, &u4)| CurvePoint { h_x, u4, error: e }).collect()
    }

    #[test]
    fn crossing_midpoint_and_symmetry() {
        let h = [2.8, 3.0];
        let a = curve(&h, &[0.3, 0.4], 0.01);
        let b = curve(&h, &[0.4, 0.3], 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ab = find_crossing(&a, &b, 500, &mut rng).unwrap();
        assert!((ab.h_x_c - 2.9).abs() < 1e-12);
        assert!(ab.error > 0.0 && ab.error < 0.1);
        let ba = find_crossing(&b, &a, 500, &mut rng).unwrap();
        assert_eq!(ab.h_x_c, ba.h_x_c);
    }

    #[test]
    fn crossing_errors() {
        let h = [2.6, 2.7, 2.8, 2.9];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = curve(&h, &[0.5, 0.4, 0.3, 0.2], 0.01);
        let above = curve(&h, &[0.6, 0.5, 0.4, 0.3], 0.01);
        assert!(matches!(find_crossing(&a, &above, 100, &mut rng), Err(Error::NoCrossing)));
        let wiggle = curve(&h, &[0.6, 0.3, 0.4, 0.1], 0.01);
        match find_crossing(&a, &wiggle, 100, &mut rng) {
            Err(Error::AmbiguousCrossing(c)) => assert_eq!(c.len(), 3),
            other => panic!("{other:?}"),
        }
        assert!(find_crossing(&a, &a[..3], 100, &mut rng).is_err());
    }

    #[test]
    fn binder_csv_rows() {
        let p = BinderPoint {
            h_x: 2.8,
            u4_by_size: BTreeMap::from([("3x3".to_string(), (0.5, 0.01)), ("4x3".to_string(), (0.55, 0.02))]),
            ed_by_size: BTreeMap::from([("3x3".to_string(), 0.51)]),
            n_samples: 100,
        };
        let mut buf = Vec::new();
        write_binder_csv(&mut buf, &[p]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "h_x,size,u4,error,n_samples,ed_u4\n2.8,3x3,0.5,0.01,100,0.51\n2.8,4x3,0.55,0.02,100,\n"
        );
    }
}
