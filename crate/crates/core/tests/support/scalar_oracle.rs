//! Straight-line scalar model of one pruned attention head on raw fixed-point
//! integers. Written against the algorithm text only; shares no code with the
//! library beyond `libm`.

use num_bigint::BigInt;
use num_rational::BigRational;

pub struct ScalarHead {
    pub out: Vec<i32>,
    pub mask: Vec<bool>,
    pub keep: bool,
    pub theta_head: i64,
    pub integer_atten: Vec<i64>,
}

fn trunc_split(raw: i32, frac_bits: u32) -> (i64, i64) {
    let one = 1i64 << frac_bits;
    let raw = raw as i64;
    let int = raw / one * one; // Rust integer division truncates toward zero.
    (int, raw - int)
}

fn round_half_even_shift(x: i64, s: u32) -> i64 {
    let d = 1i64 << s;
    let q = x.div_euclid(d);
    let r = x.rem_euclid(d);
    let twice = 2 * r;
    if twice > d || (twice == d && q % 2 != 0) {
        q + 1
    } else {
        q
    }
}

#[allow(clippy::too_many_arguments)]
pub fn scalar_head(
    q: &[i32],
    k: &[i32],
    v: &[i32],
    l: usize,
    d_h: usize,
    total_bits: u32,
    frac_bits: u32,
    rho: f64,
    tau: f64,
    zero_logit: bool,
) -> ScalarHead {
    let one = 1i64 << frac_bits;
    let max_raw = (1i64 << (total_bits - 1)) - 1;
    let min_raw = -(1i64 << (total_bits - 1));

    // Integer and fractional parts.
    let mut iq = vec![0i64; l * d_h];
    let mut fq = vec![0i64; l * d_h];
    let mut ik = vec![0i64; l * d_h];
    let mut fk = vec![0i64; l * d_h];
    for n in 0..l * d_h {
        let (a, b) = trunc_split(q[n], frac_bits);
        iq[n] = a;
        fq[n] = b;
        let (a, b) = trunc_split(k[n], frac_bits);
        ik[n] = a;
        fk[n] = b;
    }

    // Integer_atten in integer units.
    let mut ia = vec![0i64; l * l];
    for i in 0..l {
        for j in 0..l {
            let mut s = 0i64;
            for t in 0..d_h {
                s += (iq[i * d_h + t] / one) * (ik[j * d_h + t] / one);
            }
            ia[i * l + j] = s;
        }
    }

    // Block importance, thresholds, mask.
    let nb = l / 2;
    let mut theta = vec![0i64; nb * nb];
    let mut head_total = 0i64;
    for bi in 0..nb {
        for bj in 0..nb {
            let mut s = 0i64;
            for r in 0..2 {
                for c in 0..2 {
                    s += ia[(2 * bi + r) * l + 2 * bj + c].abs();
                }
            }
            theta[bi * nb + bj] = s;
            head_total += s;
        }
    }
    let big = |x: i64| BigRational::from_integer(BigInt::from(x));
    let rho_q = BigRational::from_float(rho).unwrap();
    let mut mask = vec![true; nb * nb];
    for bi in 0..nb {
        let row = &theta[bi * nb..(bi + 1) * nb];
        let mn = *row.iter().min().unwrap();
        let mx = *row.iter().max().unwrap();
        let mean = big(row.iter().sum()) / big(nb as i64);
        let cut = if rho >= 0.0 {
            &rho_q * big(mx) + (big(1) - &rho_q) * &mean
        } else {
            -&rho_q * big(mn) + (big(1) + &rho_q) * &mean
        };
        for bj in 0..nb {
            if big(row[bj]) < cut {
                mask[bi * nb + bj] = false;
            }
        }
    }
    let keep = (head_total as f64) > tau;
    let mut out = vec![0i32; l * d_h];
    if !keep {
        return ScalarHead { out, mask, keep, theta_head: head_total, integer_atten: ia };
    }

    // Approximate scores of kept blocks in scale 2^(2F), then scaled reals.
    let scale = (1u64 << (2 * frac_bits)) as f64;
    let root = (d_h as f64).sqrt();
    let kept = |r: usize, c: usize| mask[(r / 2) * nb + c / 2];
    let mut probs = vec![0f64; l * l];
    for i in 0..l {
        let mut logit: Vec<Option<f64>> = vec![None; l];
        for j in 0..l {
            if kept(i, j) {
                let mut acc = ia[i * l + j] * one * one;
                for t in 0..d_h {
                    acc += iq[i * d_h + t] * fk[j * d_h + t];
                    acc += fq[i * d_h + t] * ik[j * d_h + t];
                }
                logit[j] = Some(acc as f64 / scale / root);
            } else if zero_logit {
                logit[j] = Some(0.0);
            }
        }
        let mut m = f64::NEG_INFINITY;
        for x in logit.iter().flatten() {
            if *x > m {
                m = *x;
            }
        }
        if m == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for j in 0..l {
            if let Some(x) = logit[j] {
                probs[i * l + j] = libm::exp(x - m);
                sum += probs[i * l + j];
            }
        }
        for j in 0..l {
            probs[i * l + j] /= sum;
        }
    }

    // Probabilities back to the data format, then P·V with one rounding.
    let pq: Vec<i64> = probs
        .iter()
        .map(|&p| ((p * one as f64).round_ties_even() as i64).clamp(min_raw, max_raw))
        .collect();
    for i in 0..l {
        for c in 0..d_h {
            let mut acc = 0i64;
            for j in 0..l {
                acc += pq[i * l + j] * v[j * d_h + c] as i64;
            }
            out[i * d_h + c] = round_half_even_shift(acc, frac_bits).clamp(min_raw, max_raw) as i32;
        }
    }
    ScalarHead { out, mask, keep, theta_head: head_total, integer_atten: ia }
}
