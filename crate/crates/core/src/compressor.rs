//! Per-frame truncated SVD of node features.
//!
//! A node sends, for every frame, the `D x a` block `U_a * Sigma_a` and the
//! `a x F'` block `V_a^T`. The fusion center multiplies them back together.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::FeatureTensor;

const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 60;

/// Thin SVD `A = U diag(s) V^T` with `k = min(m, n)` singular triplets,
/// singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Signs are canonical: the largest-magnitude entry of every left singular
/// vector is positive, so repeated calls return identical factors.
pub fn svd(a: ArrayView2<f64>) -> Result<Svd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let (m, n) = a.dim();
    if m >= n {
        let (u, s, v) = jacobi_tall(a.to_owned());
        Ok(canonicalize(u, s, v.reversed_axes()))
    } else {
        // A^T = V S U^T
        let (v, s, u) = jacobi_tall(a.t().to_owned());
        Ok(canonicalize(u, s, v.reversed_axes()))
    }
}

/// Orthogonalizes the columns of a tall matrix `b` (m >= n). Returns
/// `(U, s, V)` with `b = U diag(s) V^T`.
fn jacobi_tall(mut b: Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (m, n) = b.dim();
    let mut v = Array2::<f64>::eye(n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..m {
                    let (x, y) = (b[[r, i]], b[[r, j]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for r in 0..m {
                    let (x, y) = (b[[r, i]], b[[r, j]]);
                    b[[r, i]] = c * x - sn * y;
                    b[[r, j]] = sn * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[[r, i]], v[[r, j]]);
                    v[[r, i]] = c * x - sn * y;
                    v[[r, j]] = sn * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = b
        .axis_iter(Axis(1))
        .map(|col| col.dot(&col).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let floor = scale * f64::EPSILON * (m.max(n) as f64);
    let mut u = Array2::zeros((m, n));
    let mut vs = Array2::zeros((n, n));
    let mut s = Array1::zeros(n);
    let mut filled = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vs.column_mut(dst).assign(&v.column(src));
        if norms[src] > floor && norms[src] > 0.0 {
            s[dst] = norms[src];
            u.column_mut(dst).assign(&(&b.column(src) / norms[src]));
            filled.push(dst);
        }
    }
    complete_basis(&mut u, &filled);
    (u, s, vs)
}

/// Fills the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to all others (Gram-Schmidt against the standard basis).
fn complete_basis(u: &mut Array2<f64>, filled: &[usize]) {
    let (m, n) = u.dim();
    let mut done: Vec<usize> = filled.to_vec();
    let mut candidate = 0;
    for col in 0..n {
        if filled.contains(&col) {
            continue;
        }
        while candidate < m {
            let mut e = Array1::<f64>::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &d in &done {
                    let proj = u.column(d).dot(&e);
                    e.scaled_add(-proj, &u.column(d));
                }
            }
            let norm = e.dot(&e).sqrt();
            if norm > 1e-6 {
                u.column_mut(col).assign(&(e / norm));
                done.push(col);
                break;
            }
        }
    }
}

fn canonicalize(mut u: Array2<f64>, s: Array1<f64>, mut vt: Array2<f64>) -> Svd {
    for i in 0..s.len() {
        let col = u.column(i);
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            u.column_mut(i).mapv_inplace(|x| -x);
            vt.row_mut(i).mapv_inplace(|x| -x);
        }
    }
    Svd { u, s, vt }
}

/// Rank-`a` factors of one frame, as carried on the wire (float32).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `D x a`, the product `U_a Sigma_a`.
    pub left: Array2<f32>,
    /// `a x F'`, the matrix `V_a^T`.
    pub right: Array2<f32>,
}

impl SvdFactors {
    pub fn new(left: Array2<f32>, right: Array2<f32>) -> Result<Self> {
        let f = Self { left, right };
        f.validate()?;
        Ok(f)
    }

    pub fn zeros(d: usize, f_prime: usize, rank: usize) -> Self {
        Self {
            left: Array2::zeros((d, rank)),
            right: Array2::zeros((rank, f_prime)),
        }
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn d(&self) -> usize {
        self.left.nrows()
    }

    pub fn f_prime(&self) -> usize {
        self.right.ncols()
    }

    /// Number of values carried: `(D + F') * a`.
    pub fn payload_len(&self) -> usize {
        (self.d() + self.f_prime()) * self.rank()
    }

    /// Column norms of `left`, i.e. the retained singular values.
    pub fn singular_values(&self) -> Vec<f64> {
        self.left
            .axis_iter(Axis(1))
            .map(|c| c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let rank = self.rank();
        if self.right.nrows() != rank {
            return Err(Error::Shape {
                name: "svd right factor".into(),
                expected: vec![rank, self.f_prime()],
                found: self.right.shape().to_vec(),
            });
        }
        let max = self.d().min(self.f_prime());
        if rank == 0 || rank > max {
            return Err(Error::RankOutOfRange { rank, max });
        }
        Ok(())
    }
}

/// Best rank-`rank` approximation factors of one `D x F'` frame.
pub fn compress_frame(frame: ArrayView2<f64>, rank: usize) -> Result<SvdFactors> {
    let max = frame.nrows().min(frame.ncols());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let Svd { u, s, vt } = svd(frame)?;
    let mut left = Array2::zeros((frame.nrows(), rank));
    for i in 0..rank {
        left.column_mut(i)
            .assign(&u.column(i).mapv(|x| (x * s[i]) as f32));
    }
    let right = vt.slice(s![..rank, ..]).mapv(|x| x as f32);
    Ok(SvdFactors { left, right })
}

/// `left * right` evaluated in double precision.
pub fn decompress_frame(f: &SvdFactors) -> Result<Array2<f64>> {
    f.validate()?;
    Ok(f.left.mapv(f64::from).dot(&f.right.mapv(f64::from)))
}

/// Compresses every frame of a `D x T x F'` feature independently.
pub fn compress_sequence(h: &FeatureTensor, rank: usize) -> Result<Vec<SvdFactors>> {
    h.data
        .axis_iter(Axis(1))
        .map(|frame| compress_frame(frame, rank))
        .collect()
}

/// Reassembles a `D x T x F'` feature; `None` frames become zeros.
pub fn decompress_sequence(
    frames: &[Option<SvdFactors>],
    d: usize,
    f_prime: usize,
) -> Result<FeatureTensor> {
    let mut data = ndarray::Array3::zeros((d, frames.len(), f_prime));
    for (t, f) in frames.iter().enumerate() {
        if let Some(f) = f {
            let frame = decompress_frame(f)?;
            if frame.dim() != (d, f_prime) {
                return Err(Error::Shape {
                    name: format!("frame {t}"),
                    expected: vec![d, f_prime],
                    found: frame.shape().to_vec(),
                });
            }
            data.index_axis_mut(Axis(1), t).assign(&frame);
        }
    }
    Ok(FeatureTensor { data })
}

/// Mean squared error between a feature and its rank-limited reconstruction.
pub fn reconstruction_mse(h: &FeatureTensor, rank: usize) -> Result<f64> {
    let factors = compress_sequence(h, rank)?;
    let mut acc = 0.0;
    for (frame, f) in h.data.axis_iter(Axis(1)).zip(&factors) {
        let rec = decompress_frame(f)?;
        acc += (&frame - &rec).mapv(|x| x * x).sum();
    }
    Ok(acc / h.data.len() as f64)
}
