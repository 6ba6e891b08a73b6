//! Bessel functions of the first kind, integer order.
//!
//! Miller's downward recurrence normalized with the Neumann sum
//! J_0 + 2 Σ J_{2k} = 1.

/// J_0(x) .. J_{n_max}(x).
pub fn bessel_j_seq(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let neg = x < 0.0;
    let ax = x.abs();
    let top = n_max.max(ax.ceil() as usize);
    let mut m = top + 20 + (40.0 * top.max(1) as f64).sqrt() as usize;
    m += m % 2;

    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut sum = 0.0;
    for k in (1..=m).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        // cur is now J_{k-1}
        let j = k - 1;
        if j <= n_max {
            out[j] = cur;
        }
        if j > 0 && j % 2 == 0 {
            sum += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            sum *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
    if neg {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// J_n(x) for any integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let k = n.unsigned_abs() as usize;
    let v = bessel_j_seq(k, x)[k];
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}

/// k-th positive zero of J_0 (k ≥ 1), by Newton iteration from McMahon's
/// asymptotic estimate.
pub fn j0_zero(k: usize) -> f64 {
    assert!(k >= 1);
    let b = (k as f64 - 0.25) * std::f64::consts::PI;
    let mut x = b + 1.0 / (8.0 * b) - 124.0 / (3.0 * (8.0 * b).powi(3));
    for _ in 0..50 {
        let j = bessel_j_seq(1, x);
        let dx = j[0] / j[1];
        x += dx;
        if dx.abs() < 1e-15 * x {
            break;
        }
    }
    x
}
